#include "qsun/csv.hpp"

#include "qsun/errors.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace qsun::csv {

std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

Writer::Writer(const std::filesystem::path& path, const std::string& schema, std::vector<std::string> columns)
    : path_(path), out_(path, std::ios::binary), columns_(columns.size())
{
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
    out_ << "# qsun-csv schema=" << schema << " version=" << schema_version << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << "\n";
}

void Writer::sep()
{
    if (in_row_ >= columns_) throw std::logic_error("csv row has too many cells: " + path_.string());
    if (in_row_++) out_ << ",";
}

Writer& Writer::cell(double v)
{
    sep();
    out_ << format_double(v);
    return *this;
}

Writer& Writer::cell(long long v)
{
    sep();
    out_ << v;
    return *this;
}

Writer& Writer::cell(const std::string& v)
{
    sep();
    out_ << v;
    return *this;
}

void Writer::end_row()
{
    if (in_row_ != columns_) throw std::logic_error("csv row has too few cells: " + path_.string());
    out_ << "\n";
    in_row_ = 0;
    ++rows_;
}

std::size_t Table::column(const std::string& name) const
{
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw Error("column '" + name + "' missing from schema " + schema);
}

namespace {

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

Table read(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    Table t;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# qsun-csv ", 0) != 0) throw Error(path.string() + ": missing schema header line");
    std::istringstream hs(line.substr(11));
    std::string tok;
    while (hs >> tok) {
        if (tok.rfind("schema=", 0) == 0) t.schema = tok.substr(7);
        if (tok.rfind("version=", 0) == 0) t.version = std::stoi(tok.substr(8));
    }
    if (!std::getline(in, line)) throw Error(path.string() + ": missing column row");
    t.columns = split(line);
    while (std::getline(in, line))
        if (!line.empty()) t.rows.push_back(split(line));
    return t;
}

} // namespace qsun::csv
