#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace qsun::csv {

inline constexpr int schema_version = 1;

// Writes "# qsun-csv schema=<name> version=<v>" followed by the column row.
// Numbers are printed with 17 significant digits so files are exact and
// byte-stable across runs.
class Writer {
public:
    Writer(const std::filesystem::path& path, const std::string& schema, std::vector<std::string> columns);

    Writer& cell(double v);
    Writer& cell(long long v);
    Writer& cell(std::size_t v) { return cell(static_cast<long long>(v)); }
    Writer& cell(int v) { return cell(static_cast<long long>(v)); }
    Writer& cell(bool v) { return cell(static_cast<long long>(v ? 1 : 0)); }
    Writer& cell(const std::string& v);
    Writer& cell(const char* v) { return cell(std::string(v)); }
    void end_row();

    std::size_t rows() const { return rows_; }
    const std::filesystem::path& path() const { return path_; }

private:
    void sep();
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t columns_;
    std::size_t in_row_ = 0;
    std::size_t rows_ = 0;
};

std::string format_double(double v);

struct Table {
    std::string schema;
    int version = 0;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
};

// Reads a file produced by Writer.
Table read(const std::filesystem::path& path);

} // namespace qsun::csv
