#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hierfit::data {

/// Logical factor columns, outermost nesting first for the first four.
inline constexpr std::array<std::string_view, 6> kFactorNames = {
    "block", "plot", "subplot", "plant", "tension", "silicate"};
inline constexpr std::array<std::string_view, 4> kNestingPath = {"block", "plot", "subplot", "plant"};
inline constexpr std::string_view kTime = "time";
inline constexpr std::string_view kResponse = "height";

struct Factor {
    std::vector<int> codes;
    std::vector<std::string> levels;

    std::size_t n_levels() const { return levels.size(); }
    const std::string& label(std::size_t row) const { return levels[codes[row]]; }

    bool operator==(const Factor&) const = default;
};

struct Observation {
    std::string block;
    std::string plot;
    std::string subplot;
    std::string plant;
    std::string tension;
    std::string silicate;
    double time = 0.0;
    double height = 0.0;
};

/// Optional explicit level order per factor; unlisted factors keep
/// first-appearance order.
using LevelOrder = std::map<std::string, std::vector<std::string>, std::less<>>;

/// Logical column name -> header name in the CSV. Missing entries map to
/// themselves.
using ColumnSchema = std::map<std::string, std::string, std::less<>>;

/// Tidy observation table of the split-plot-with-subsampling experiment.
/// Validated on construction: strict nesting block > plot > subplot > plant,
/// time > 0 and finite numeric values.
class LongTable {
public:
    static LongTable from_rows(const std::vector<Observation>& rows, const LevelOrder& order = {});

    std::size_t size() const { return time_.size(); }

    bool has_factor(std::string_view name) const;
    bool has_covariate(std::string_view name) const;

    const Factor& factor(std::string_view name) const;
    std::span<const double> covariate(std::string_view name) const;

    const std::vector<double>& time() const { return time_; }
    const std::vector<double>& height() const { return height_; }

    Observation row(std::size_t i) const;

    bool operator==(const LongTable&) const = default;

private:
    LongTable() = default;

    std::array<Factor, kFactorNames.size()> factors_;
    std::vector<double> time_;
    std::vector<double> height_;
};

LongTable parse_csv(std::istream& in, const ColumnSchema& schema = {}, const LevelOrder& order = {});
LongTable ingest_csv(const std::filesystem::path& path, const ColumnSchema& schema = {},
                     const LevelOrder& order = {});

void write_csv(const LongTable& table, std::ostream& out);
void write_csv(const LongTable& table, const std::filesystem::path& path);

}  // namespace hierfit::data
