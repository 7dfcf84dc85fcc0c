#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "hierfit/error.hpp"
#include "hierfit/table.hpp"

namespace hierfit::data {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\"");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\"");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_number(const std::string& text, std::size_t line_no, std::string_view column) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (text.empty() || ec != std::errc() || ptr != end) {
        // from_chars rejects "nan"/"inf" spellings on some libstdc++ builds;
        // those are non-finite rather than non-numeric.
        if (text == "nan" || text == "NaN" || text == "NA" || text == "inf" || text == "-inf" || text == "Inf") {
            throw Error(ErrorKind::NonFiniteValue,
                        "line " + std::to_string(line_no) + ", column " + std::string(column) + ": '" + text + "'");
        }
        throw Error(ErrorKind::NonNumericValue,
                    "line " + std::to_string(line_no) + ", column " + std::string(column) + ": '" + text + "'");
    }
    return value;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

LongTable parse_csv(std::istream& in, const ColumnSchema& schema, const LevelOrder& order) {
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorKind::MissingColumn, "empty input: no header row");
    }
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = split_line(line);

    auto column_of = [&](std::string_view logical) -> std::size_t {
        std::string wanted(logical);
        if (auto it = schema.find(logical); it != schema.end()) wanted = it->second;
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == wanted) return c;
        }
        throw Error(ErrorKind::MissingColumn, "header lacks column '" + wanted + "'");
    };

    std::array<std::size_t, kFactorNames.size()> factor_cols{};
    for (std::size_t k = 0; k < kFactorNames.size(); ++k) factor_cols[k] = column_of(kFactorNames[k]);
    const std::size_t time_col = column_of(kTime);
    const std::size_t height_col = column_of(kResponse);

    std::vector<Observation> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() < header.size()) {
            throw Error(ErrorKind::MissingColumn, "line " + std::to_string(line_no) + " has too few fields");
        }
        Observation obs;
        obs.block = fields[factor_cols[0]];
        obs.plot = fields[factor_cols[1]];
        obs.subplot = fields[factor_cols[2]];
        obs.plant = fields[factor_cols[3]];
        obs.tension = fields[factor_cols[4]];
        obs.silicate = fields[factor_cols[5]];
        obs.time = parse_number(fields[time_col], line_no, kTime);
        obs.height = parse_number(fields[height_col], line_no, kResponse);
        rows.push_back(std::move(obs));
    }
    if (rows.empty()) {
        throw Error(ErrorKind::EmptyTable, "no data rows after the header");
    }
    return LongTable::from_rows(rows, order);
}

LongTable ingest_csv(const std::filesystem::path& path, const ColumnSchema& schema, const LevelOrder& order) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path.string());
    }
    return parse_csv(in, schema, order);
}

void write_csv(const LongTable& table, std::ostream& out) {
    out << "block,plot,subplot,plant,tension,silicate,time,height\n";
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto row = table.row(i);
        out << row.block << ',' << row.plot << ',' << row.subplot << ',' << row.plant << ',' << row.tension << ','
            << row.silicate << ',' << format_double(row.time) << ',' << format_double(row.height) << '\n';
    }
}

void write_csv(const LongTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    write_csv(table, out);
}

}  // namespace hierfit::data
