#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hierfit {

enum class Family { Normal, GeneralizedGamma };
enum class Link { Identity, Log };

/// "NO" / "GG".
std::string_view family_code(Family family);
Family parse_family(std::string_view code);
std::string_view link_name(Link link);

struct LinkSet {
    Link mu = Link::Identity;
    Link sigma = Link::Log;
    Link nu = Link::Identity;

    static LinkSet defaults(Family family);
    bool operator==(const LinkSet&) const = default;
};

}  // namespace hierfit

namespace hierfit::data {

/// A variable inside a model term. `power` > 1 only for covariates, written
/// I(name^power).
struct Variable {
    std::string name;
    int power = 1;

    std::string label() const;
    bool operator==(const Variable&) const = default;
};

/// Product of variables; the empty product is the intercept.
struct Term {
    std::vector<Variable> parts;

    bool is_intercept() const { return parts.empty(); }
    std::string label() const;
    bool operator==(const Term&) const = default;
};

/// One random-intercept level, identified by its grouping path
/// (e.g. block/plot/subplot).
struct RandomLevel {
    std::vector<std::string> path;

    const std::string& name() const { return path.back(); }
    std::string label() const;
    bool operator==(const RandomLevel&) const = default;
};

/// Declarative model description. Grammar:
///
///   height ~ block + tension*silicate*time + I(time^2),
///       random = block/plot/subplot/plant, family = NO|GG, varfunc = power(time)
///
/// The intercept is always the first fixed term and term order is kept as
/// written (`a*b` expands in place). A random path a/b/c contributes the
/// levels a, a/b, a/b/c, skipping levels whose factor is a fixed main effect.
struct ModelSpec {
    std::string response = "height";
    std::vector<Term> fixed_terms;
    std::vector<std::string> random_path;
    std::vector<RandomLevel> random_levels;
    Family family = Family::Normal;
    LinkSet links = LinkSet::defaults(Family::Normal);
    std::optional<std::string> power_covariate;

    static ModelSpec parse(std::string_view text);

    /// Canonical text form; parse(to_string()) reproduces an equal ModelSpec.
    std::string to_string() const;

    /// Re-derives links and checks family/variance-function compatibility.
    void set_family(Family f);
    void validate() const;

    bool operator==(const ModelSpec&) const = default;
};

}  // namespace hierfit::data
