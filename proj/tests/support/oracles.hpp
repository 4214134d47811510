#pragma once
// Independent reference implementations used by the tests. Written from the
// definitions, not from the library code, and kept deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracles {

inline std::size_t fnv_bucket(const std::string& token, std::size_t dim, std::uint64_t seed) {
    std::uint64_t h = 14695981039346656037ULL;
    for (int i = 0; i < 8; ++i) {
        h ^= (seed >> (8 * i)) & 0xff;
        h *= 1099511628211ULL;
    }
    for (unsigned char c : token) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h % dim;
}

/// Gaussian components, or components from {-1, 0, 1} when `quantized`
/// (which makes exact ties likely).
inline std::vector<float> random_vector(std::mt19937_64& rng, std::size_t dim, bool quantized) {
    std::vector<float> v(dim);
    std::normal_distribution<float> g;
    std::uniform_int_distribution<int> q(-1, 1);
    for (auto& x : v) x = quantized ? static_cast<float>(q(rng)) : g(rng);
    return v;
}

/// Stored form of an indexed vector: x / |x| rounded to float, zero stays zero.
inline std::vector<float> stored(const std::vector<float>& x) {
    double n = 0;
    for (float v : x) n += double(v) * double(v);
    n = std::sqrt(n);
    std::vector<float> out(x.size(), 0.0f);
    if (n == 0) return out;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(double(x[i]) / n);
    return out;
}

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += double(a[i]) * double(b[i]);
        na += double(a[i]) * double(a[i]);
        nb += double(b[i]) * double(b[i]);
    }
    if (na == 0 || nb == 0) return 0.0;
    return std::clamp(d / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Full scan + full sort: similarity descending, doc_id ascending.
inline std::vector<std::pair<std::string, double>> brute_force_top_k(
    const std::vector<std::pair<std::string, std::vector<float>>>& rows, const std::vector<float>& query,
    std::size_t k) {
    std::vector<std::pair<std::string, double>> all;
    for (const auto& [id, v] : rows) all.emplace_back(id, cosine(stored(v), query));
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

/// Prune decision straight from the hybrid-score definition.
inline bool pruned(double rho, double sigma, double w_cov, double tau) {
    return w_cov * rho + (1.0 - w_cov) * sigma < tau;
}

/// Ranked entries and ground truth as plain integers: entry i "is" method
/// ranked[i]; ground truth is a set of method numbers.
struct MetricCase {
    std::vector<int> ranked;
    std::set<int> truth;
    std::vector<int> before;
    std::vector<int> after;
};

inline bool hit(const MetricCase& c, std::size_t k) {
    for (std::size_t i = 0; i < c.ranked.size() && i < k; ++i) {
        if (c.truth.count(c.ranked[i])) return true;
    }
    return false;
}

inline double rr(const MetricCase& c) {
    for (std::size_t i = 0; i < c.ranked.size(); ++i) {
        if (c.truth.count(c.ranked[i])) return 1.0 / double(i + 1);
    }
    return 0.0;
}

inline bool strict_loss(const MetricCase& c) {
    for (int g : c.truth) {
        const bool in_before = std::count(c.before.begin(), c.before.end(), g) > 0;
        const bool in_after = std::count(c.after.begin(), c.after.end(), g) > 0;
        if (in_before && !in_after) return true;
    }
    return false;
}

inline double recall(const MetricCase& c) {
    int kept = 0;
    for (int g : c.truth) kept += std::count(c.after.begin(), c.after.end(), g) > 0;
    return c.truth.empty() ? 0.0 : double(kept) / double(c.truth.size());
}

inline MetricCase random_metric_case(std::mt19937_64& rng) {
    MetricCase c;
    const int universe = std::uniform_int_distribution<int>(1, 20)(rng);
    std::vector<int> ids(universe);
    for (int i = 0; i < universe; ++i) ids[i] = i;
    std::shuffle(ids.begin(), ids.end(), rng);
    std::bernoulli_distribution coin(0.5);
    for (int id : ids) {
        if (coin(rng)) c.before.push_back(id);
    }
    for (int id : c.before) {
        if (coin(rng)) c.after.push_back(id);
    }
    // ranking: a shuffled subset of the survivors
    for (int id : c.after) {
        if (coin(rng)) c.ranked.push_back(id);
    }
    std::shuffle(c.ranked.begin(), c.ranked.end(), rng);
    const int gt = std::uniform_int_distribution<int>(1, 3)(rng);
    std::uniform_int_distribution<int> pick(0, universe + 2);  // may fall outside the universe
    while (static_cast<int>(c.truth.size()) < gt) c.truth.insert(pick(rng));
    return c;
}

}  // namespace oracles
