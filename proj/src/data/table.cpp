#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "hierfit/error.hpp"
#include "hierfit/table.hpp"

namespace hierfit::data {

namespace {

std::size_t factor_index(std::string_view name) {
    auto it = std::find(kFactorNames.begin(), kFactorNames.end(), name);
    if (it == kFactorNames.end()) {
        throw Error(ErrorKind::UnknownTerm, "no factor named '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - kFactorNames.begin());
}

const std::string& factor_value(const Observation& obs, std::size_t index) {
    switch (index) {
        case 0: return obs.block;
        case 1: return obs.plot;
        case 2: return obs.subplot;
        case 3: return obs.plant;
        case 4: return obs.tension;
        default: return obs.silicate;
    }
}

Factor encode(const std::vector<Observation>& rows, std::size_t index, const LevelOrder& order) {
    Factor f;
    std::unordered_map<std::string, int> code_of;
    const std::string name(kFactorNames[index]);
    if (auto it = order.find(name); it != order.end()) {
        for (const auto& level : it->second) {
            if (!code_of.emplace(level, static_cast<int>(f.levels.size())).second) {
                throw Error(ErrorKind::InvalidSpec, "duplicate level '" + level + "' in order for " + name);
            }
            f.levels.push_back(level);
        }
        f.codes.reserve(rows.size());
        std::vector<bool> seen(f.levels.size(), false);
        for (const auto& row : rows) {
            auto found = code_of.find(factor_value(row, index));
            if (found == code_of.end()) {
                throw Error(ErrorKind::InvalidSpec,
                            "level '" + factor_value(row, index) + "' of " + name + " missing from level order");
            }
            f.codes.push_back(found->second);
            seen[found->second] = true;
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
            throw Error(ErrorKind::InvalidSpec, "level order for " + name + " lists unobserved levels");
        }
        return f;
    }
    f.codes.reserve(rows.size());
    for (const auto& row : rows) {
        const auto& value = factor_value(row, index);
        auto [it, inserted] = code_of.emplace(value, static_cast<int>(f.levels.size()));
        if (inserted) f.levels.push_back(value);
        f.codes.push_back(it->second);
    }
    return f;
}

}  // namespace

LongTable LongTable::from_rows(const std::vector<Observation>& rows, const LevelOrder& order) {
    if (rows.empty()) {
        throw Error(ErrorKind::EmptyTable, "table has no observations");
    }
    for (const auto& [name, levels] : order) {
        (void)levels;
        factor_index(name);
    }
    LongTable table;
    for (std::size_t k = 0; k < kFactorNames.size(); ++k) {
        table.factors_[k] = encode(rows, k, order);
    }
    table.time_.reserve(rows.size());
    table.height_.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (!std::isfinite(row.time) || !std::isfinite(row.height)) {
            throw Error(ErrorKind::NonFiniteValue, "row " + std::to_string(i + 1) + " has a non-finite value");
        }
        if (row.time <= 0.0) {
            throw Error(ErrorKind::NonPositiveTime, "row " + std::to_string(i + 1) + " has time <= 0");
        }
        table.time_.push_back(row.time);
        table.height_.push_back(row.height);
    }

    // Each child label must sit under exactly one parent label.
    for (std::size_t level = 1; level < kNestingPath.size(); ++level) {
        const Factor& child = table.factors_[level];
        const Factor& parent = table.factors_[level - 1];
        std::vector<int> parent_of(child.n_levels(), -1);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            int& p = parent_of[child.codes[i]];
            if (p < 0) {
                p = parent.codes[i];
            } else if (p != parent.codes[i]) {
                throw Error(ErrorKind::BrokenNesting,
                            std::string(kNestingPath[level]) + " '" + child.label(i) + "' appears under two " +
                                std::string(kNestingPath[level - 1]) + " ids ('" + parent.levels[p] + "', '" +
                                parent.label(i) + "')");
            }
        }
    }
    return table;
}

bool LongTable::has_factor(std::string_view name) const {
    return std::find(kFactorNames.begin(), kFactorNames.end(), name) != kFactorNames.end();
}

bool LongTable::has_covariate(std::string_view name) const { return name == kTime || name == kResponse; }

const Factor& LongTable::factor(std::string_view name) const { return factors_[factor_index(name)]; }

std::span<const double> LongTable::covariate(std::string_view name) const {
    if (name == kTime) return time_;
    if (name == kResponse) return height_;
    throw Error(ErrorKind::UnknownTerm, "no covariate named '" + std::string(name) + "'");
}

Observation LongTable::row(std::size_t i) const {
    return Observation{factors_[0].label(i), factors_[1].label(i), factors_[2].label(i), factors_[3].label(i),
                       factors_[4].label(i), factors_[5].label(i), time_[i],            height_[i]};
}

}  // namespace hierfit::data
