#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace stochflow {

/// Fixed %.12g rendering used for every numeric CSV cell, so equal values
/// always produce equal bytes.
std::string format_cell(double v);

/// Header-checked CSV writer. Every row must match the column count.
class CsvWriter {
public:
    CsvWriter(const std::string& path, std::vector<std::string> columns);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<double>& values);
    /// Cells written verbatim; commas inside cells are rejected.
    void row_mixed(const std::vector<std::string>& cells);
    void close();

    const std::string& path() const { return path_; }
    std::size_t rows_written() const { return rows_; }

private:
    std::string path_;
    std::vector<std::string> columns_;
    std::FILE* file_ = nullptr;
    std::size_t rows_ = 0;
};

/// FNV-1a digest of the file bytes.
std::uint64_t file_digest(const std::string& path);

/// Re-reads a CSV, demands the exact header line and a uniform cell count per
/// row, and returns the number of data rows.
std::size_t validate_csv(const std::string& path, const std::vector<std::string>& columns);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);

}  // namespace stochflow
