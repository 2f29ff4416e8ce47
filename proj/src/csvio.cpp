#include "stochflow/csvio.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stochflow/common.hpp"

namespace stochflow {

std::string format_cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, std::vector<std::string> columns)
    : path_(path), columns_(std::move(columns)) {
    if (columns_.empty()) throw ContractError("csv: no columns");
    file_ = std::fopen(path_.c_str(), "wb");
    if (!file_) throw ContractError("csv: cannot open for writing: " + path_);
    for (std::size_t i = 0; i < columns_.size(); ++i)
        std::fprintf(file_, "%s%s", i ? "," : "", columns_[i].c_str());
    std::fputc('\n', file_);
}

CsvWriter::~CsvWriter() {
    if (file_) std::fclose(file_);
}

void CsvWriter::row(const std::vector<double>& values) {
    std::vector<std::string> cells(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) cells[i] = format_cell(values[i]);
    row_mixed(cells);
}

void CsvWriter::row_mixed(const std::vector<std::string>& cells) {
    if (!file_) throw ContractError("csv: writer already closed: " + path_);
    if (cells.size() != columns_.size())
        throw ContractError("csv: row width does not match the header: " + path_);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].find(',') != std::string::npos || cells[i].find('\n') != std::string::npos)
            throw ContractError("csv: cell contains a separator: " + path_);
        std::fprintf(file_, "%s%s", i ? "," : "", cells[i].c_str());
    }
    std::fputc('\n', file_);
    ++rows_;
}

void CsvWriter::close() {
    if (!file_) return;
    std::fclose(file_);
    file_ = nullptr;
}

std::uint64_t file_digest(const std::string& path) { return fnv1a64(read_text_file(path)); }

std::size_t validate_csv(const std::string& path, const std::vector<std::string>& columns) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw ContractError("csv: empty file: " + path);
    std::string header;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) header += ',';
        header += columns[i];
    }
    if (line != header) throw ContractError("csv: header mismatch: " + path);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t cells = 1 + static_cast<std::size_t>(
                                          std::count(line.begin(), line.end(), ','));
        if (cells != columns.size())
            throw ContractError("csv: row width does not match the header: " + path);
        ++rows;
    }
    return rows;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open file: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("cannot open file for writing: " + path);
    out << content;
    if (!out) throw ContractError("write failed: " + path);
}

bool file_exists(const std::string& path) {
    std::ifstream in(path);
    return in.good();
}

}  // namespace stochflow
