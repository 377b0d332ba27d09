#pragma once

#include "qgdok/service.hpp"
#include "test_support.hpp"

#include <map>
#include <string>

namespace qgdok::test {

// Environment lookups served from a map instead of the process environment.
inline service::EnvFn fake_env(std::map<std::string, std::string> vars) {
    return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
        auto it = vars.find(name);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    };
}

inline service::AppConfig mock_config(const std::filesystem::path& data_dir) {
    auto cfg = service::load_config(std::nullopt, fake_env({{"QGDOK_DATA_DIR", data_dir.string()}, {"QGDOK_MOCK", "1"}}));
    cfg.chunking = {48, 36};
    return cfg;
}

struct FixtureDoc {
    const char* title;
    const char* kind;
    const char* body;
};

// Three small course documents used by the end-to-end tests.
inline const std::vector<FixtureDoc>& fixture_docs() {
    static const std::vector<FixtureDoc> docs{
        {"Limits and continuity", "textbook",
         "A limit describes the value that a function approaches as its input approaches a point. "
         "We write lim x->a f(x) = L when f(x) can be made arbitrarily close to L by taking x close to a. "
         "One-sided limits consider approach from the left or from the right only, and the two-sided limit "
         "exists exactly when both one-sided limits exist and agree. A function is continuous at a when the "
         "limit at a exists and equals f(a). Polynomials and rational functions are continuous on their domains. "
         "The squeeze theorem states that if g(x) <= f(x) <= h(x) near a and g and h share the limit L, then "
         "f also has limit L. Limits at infinity describe end behaviour and horizontal asymptotes."},
        {"Derivative rules tutorial", "tutorial",
         "The derivative of f at a is the limit of the difference quotient (f(a+h) - f(a)) / h as h approaches 0. "
         "The power rule gives d/dx x^n = n x^(n-1). The product rule states (fg)' = f'g + fg', and the quotient "
         "rule handles f/g. The chain rule differentiates compositions: (f(g(x)))' = f'(g(x)) g'(x). Implicit "
         "differentiation applies the chain rule to equations that define y in terms of x. A differentiable "
         "function is always continuous, but |x| shows the converse fails at 0."},
        {"Practice problems: limits", "practice_problems",
         "1. Evaluate the limit of (x^2 - 1)/(x - 1) as x approaches 1. 2. Determine whether f(x) = sin(x)/x has "
         "a limit at 0 and justify using the squeeze theorem. 3. Find the horizontal asymptotes of "
         "(3x^2 + 1)/(x^2 - 4). 4. Show that the piecewise function equal to x^2 for x < 1 and 2x - 1 for x >= 1 "
         "is continuous at 1. 5. Use the definition of the derivative to differentiate f(x) = 1/x."},
    };
    return docs;
}

inline void ingest_fixture_docs(service::Engine& engine) {
    for (const auto& d : fixture_docs()) engine.ingest(d.title, d.body, *corpus::parse_kind(d.kind));
}

} // namespace qgdok::test
