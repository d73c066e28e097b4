// Exact (truncated-height) computation of SOS partition functions, marginals
// and conditional statistics on small regions: direct enumeration for
// arbitrary site sets, column-transfer summation for rectangles. All
// quantities are sums of positive Boltzmann weights; truncation is the only
// approximation and can be certified by adaptive doubling of the height cap.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sos/lattice.hpp"
#include "sos/formulas.hpp"
#include "sos/params.hpp"

namespace sos {

struct TooLargeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EnsembleKind {
    Free,      // heights in [-h_max, h_max], boundary level n
    Positive,  // heights in [0, h_max], zero boundary, no pinning
    Wetting    // heights in [0, h_max], zero boundary, reward h per contact at 0
};

struct EnsembleSpec {
    EnsembleKind kind = EnsembleKind::Free;
    int boundary_level = 0;  // used by Free
};

struct TruncationPolicy {
    enum class Mode { Fixed, AdaptiveDoubling };
    int h_max = 12;
    double tol = 1e-12;
    Mode mode = Mode::AdaptiveDoubling;
    std::uint64_t budget = 100'000'000;  // max enumerated configurations

    static TruncationPolicy fixed(int h, std::uint64_t budget = 100'000'000) {
        return TruncationPolicy{h, 1e-12, Mode::Fixed, budget};
    }
};

/// Energy of a height field: half the sum of nearest-neighbor gradients
/// inside the region plus the full gradient across every boundary edge.
/// Exact integer arithmetic.
inline long hamiltonian(const HeightField& f) {
    const Region& rg = *f.region;
    long H = 0;
    for (int i = 0; i < int(rg.size()); ++i) {
        for (int d = 0; d < rg.degree(i); ++d) {
            int j = rg.neighbors(i)[std::size_t(d)];
            if (j > i) H += std::abs(f.at(i) - f.at(j));
        }
        H += long(rg.boundary_edges(i)) * std::abs(f.at(i) - f.boundary_level);
    }
    return H;
}

// ---------------------------------------------------------------------------
// accumulation helpers

/// Neumaier-compensated accumulator for long positive sums.
struct Accum {
    double s = 0.0, c = 0.0;
    void add(double x) {
        double t = s + x;
        if (std::abs(s) >= std::abs(x))
            c += (s - t) + x;
        else
            c += (x - t) + s;
        s = t;
    }
    double value() const { return s + c; }
};

namespace detail {

inline std::pair<int, int> height_range(EnsembleKind kind, int h_max) {
    if (kind == EnsembleKind::Free) return {-h_max, h_max};
    return {0, h_max};
}

inline double pinning_reward(EnsembleKind kind, const ModelParams& p) {
    return kind == EnsembleKind::Wetting ? p.h : 0.0;
}

/// exp(-beta * H) looked up by integer energy.
struct ExpTable {
    std::vector<double> t;
    ExpTable(double beta, long h_bound) {
        t.resize(std::size_t(h_bound) + 1);
        for (long k = 0; k <= h_bound; ++k) t[std::size_t(k)] = std::exp(-beta * double(k));
    }
    double operator()(long H) const { return t[std::size_t(H)]; }
};

/// Upper bound on the integer energy of any configuration with heights in
/// [lo, hi] and boundary level bc (for exp-table sizing).
inline long energy_upper_bound(const Region& rg, int lo, int hi, int bc) {
    long per = std::max<long>(hi - lo, std::max(std::abs(long(hi) - bc), std::abs(long(lo) - bc)));
    return 4 * long(rg.size()) * per;
}

/// Depth-first enumeration over all height configurations of a region with
/// heights in [lo, hi] and boundary level bc. The visitor receives the
/// height vector and the exact integer energy.
template <class Visitor>
void enumerate_fields(const Region& rg, int lo, int hi, int bc, std::uint64_t budget, Visitor&& visit) {
    const int n = int(rg.size());
    double cost = 1.0;
    for (int i = 0; i < n; ++i) {
        cost *= double(hi - lo + 1);
        if (cost > double(budget))
            throw TooLargeError("enumerate_fields: (range)^|Lambda| exceeds budget");
    }
    // neighbors already assigned when site i is reached (canonical order)
    std::vector<std::vector<int>> earlier;
    earlier.resize(std::size_t(n));
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < rg.degree(i); ++d) {
            int j = rg.neighbors(i)[std::size_t(d)];
            if (j < i) earlier[std::size_t(i)].push_back(j);
        }
    std::vector<int> phi(std::size_t(n), 0);
    auto rec = [&](auto&& self, int i, long H) -> void {
        if (i == n) {
            visit(const_cast<const std::vector<int>&>(phi), H);
            return;
        }
        const auto& earl = earlier[std::size_t(i)];
        const long bnd = rg.boundary_edges(i);
        for (int v = lo; v <= hi; ++v) {
            long e = bnd * std::abs(v - bc);
            for (int j : earl) e += std::abs(v - phi[std::size_t(j)]);
            phi[std::size_t(i)] = v;
            self(self, i + 1, H + e);
        }
    };
    rec(rec, 0, 0);
}

// --- rectangle column-transfer summation -----------------------------------

/// phi(site) >= min_h constraint, in the rectangle's own 1-based coordinates.
struct SiteMin {
    Site site;
    int min_h;
};

/// One-dimensional convolution with the kernel q^{|a-b|} along one axis of a
/// mixed-radix state vector, via the two-pass prefix recurrence. Exact
/// summation of positive terms.
inline void laplace_apply_axis(std::vector<double>& v, int len, std::size_t stride, double q,
                               std::vector<double>& scratchL, std::vector<double>& scratchR) {
    const std::size_t states = v.size();
    const std::size_t block = stride * std::size_t(len);
    scratchL.resize(std::size_t(len));
    scratchR.resize(std::size_t(len));
    for (std::size_t base = 0; base < states; base += block) {
        for (std::size_t off = 0; off < stride; ++off) {
            double* p = v.data() + base + off;
            double acc = 0.0;
            for (int a = 0; a < len; ++a) {
                acc = p[std::size_t(a) * stride] + q * acc;
                scratchL[std::size_t(a)] = acc;
            }
            acc = 0.0;
            for (int a = len - 1; a >= 0; --a) {
                double x = p[std::size_t(a) * stride];
                acc = x + q * acc;
                scratchR[std::size_t(a)] = acc;
                p[std::size_t(a) * stride] = scratchL[std::size_t(a)] + acc - x;
            }
        }
    }
}

/// Exact truncated log-partition of the W x H rectangle (sites [1,W]x[1,H],
/// boundary at bc on all four sides) by transfer summation over columns,
/// with optional per-site lower bounds on the heights.
inline double rect_masked_log_partition(int W, int H, const ModelParams& p, EnsembleKind kind,
                                        int bc, int h_max, const std::vector<SiteMin>& masks = {}) {
    auto [lo, hi] = height_range(kind, h_max);
    const int R = hi - lo + 1;
    const double h_pin = pinning_reward(kind, p);
    if (W < H) {
        // transpose so the column (transfer state) is the short side
        std::vector<SiteMin> tm;
        tm.reserve(masks.size());
        for (const auto& m : masks) tm.push_back({{m.site.y, m.site.x}, m.min_h});
        return rect_masked_log_partition(H, W, p, kind, bc, h_max, tm);
    }
    double statesd = 1.0;
    for (int i = 0; i < H; ++i) statesd *= R;
    if (statesd > 8e6) throw TooLargeError("rect_masked_log_partition: state space too large");
    const std::size_t states = std::size_t(statesd);

    std::vector<int> digit(static_cast<std::size_t>(H), 0);
    auto decode = [&](std::size_t s) {
        for (int i = 0; i < H; ++i) {
            digit[std::size_t(i)] = lo + int(s % std::size_t(R));
            s /= std::size_t(R);
        }
    };
    // per-column min-height constraint, -inf when absent
    std::vector<std::vector<int>> colmin(std::size_t(W) + 1, std::vector<int>(std::size_t(H), lo));
    for (const auto& m : masks) {
        if (m.site.x < 1 || m.site.x > W || m.site.y < 1 || m.site.y > H)
            throw std::invalid_argument("rect_masked_log_partition: mask outside rectangle");
        auto& c = colmin[std::size_t(m.site.x)][std::size_t(m.site.y - 1)];
        c = std::max(c, m.min_h);
    }

    const double beta = p.beta;
    auto column_weight = [&](int x, std::size_t s) -> double {
        decode(s);
        long e = 0;
        int zeros = 0;
        for (int i = 0; i < H; ++i) {
            if (digit[std::size_t(i)] < colmin[std::size_t(x)][std::size_t(i)]) return 0.0;
            if (i + 1 < H) e += std::abs(digit[std::size_t(i)] - digit[std::size_t(i + 1)]);
            if (digit[std::size_t(i)] == 0) ++zeros;
        }
        e += std::abs(digit[0] - bc) + std::abs(digit[std::size_t(H - 1)] - bc);
        return std::exp(-beta * double(e) + h_pin * double(zeros));
    };
    auto end_weight = [&](std::size_t s) -> double {
        decode(s);
        long e = 0;
        for (int i = 0; i < H; ++i) e += std::abs(digit[std::size_t(i)] - bc);
        return std::exp(-beta * double(e));
    };

    std::vector<double> v(states), sl, sr;
    double logz = 0.0;
    for (std::size_t s = 0; s < states; ++s) v[s] = column_weight(1, s) * end_weight(s);
    const double q = std::exp(-beta);
    for (int x = 2; x <= W; ++x) {
        std::size_t stride = 1;
        for (int i = 0; i < H; ++i) {
            laplace_apply_axis(v, R, stride, q, sl, sr);
            stride *= std::size_t(R);
        }
        double scale = 0.0;
        for (std::size_t s = 0; s < states; ++s) {
            v[s] *= column_weight(x, s);
            scale = std::max(scale, v[s]);
        }
        if (scale <= 0.0) return -std::numeric_limits<double>::infinity();
        for (auto& w : v) w /= scale;
        logz += std::log(scale);
    }
    Accum z;
    for (std::size_t s = 0; s < states; ++s) z.add(v[s] * end_weight(s));
    return logz + std::log(z.value());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// log-partition

namespace detail {

inline double log_partition_fixed(const Region& rg, const ModelParams& p, const EnsembleSpec& ens,
                                  int h_max, std::uint64_t budget) {
    auto [lo, hi] = height_range(ens.kind, h_max);
    const int bc = ens.kind == EnsembleKind::Free ? ens.boundary_level : 0;
    const double range = double(hi - lo + 1);
    double cost = 1.0;
    bool enum_ok = true;
    for (std::size_t i = 0; i < rg.size(); ++i) {
        cost *= range;
        if (cost > double(budget)) {
            enum_ok = false;
            break;
        }
    }
    if (rg.is_rectangle()) {
        // transfer summation computes the identical truncated sum and scales
        // to much larger height caps
        double statesd = std::pow(range, std::min(rg.rect_width(), rg.rect_height()));
        if (statesd <= 8e6)
            return rect_masked_log_partition(rg.rect_width(), rg.rect_height(), p, ens.kind, bc, h_max);
    }
    if (!enum_ok) throw TooLargeError("log_partition: region too large for enumeration budget");
    const double h_pin = pinning_reward(ens.kind, p);
    ExpTable expH(p.beta, energy_upper_bound(rg, lo, hi, bc));
    Accum z;
    if (ens.kind == EnsembleKind::Wetting) {
        std::vector<double> expC(rg.size() + 1);
        for (std::size_t c = 0; c <= rg.size(); ++c) expC[c] = std::exp(h_pin * double(c));
        enumerate_fields(rg, lo, hi, bc, budget, [&](const std::vector<int>& phi, long H) {
            int zeros = 0;
            for (int v : phi) zeros += (v == 0);
            z.add(expH(H) * expC[std::size_t(zeros)]);
        });
    } else {
        enumerate_fields(rg, lo, hi, bc, budget,
                         [&](const std::vector<int>&, long H) { z.add(expH(H)); });
    }
    return std::log(z.value());
}

}  // namespace detail

/// Log of the truncated partition sum; AdaptiveDoubling doubles the height
/// cap until the result moves by less than tol.
inline double log_partition(const Region& rg, const ModelParams& p, const EnsembleSpec& ens,
                            const TruncationPolicy& tr = {}) {
    if (tr.mode == TruncationPolicy::Mode::Fixed)
        return detail::log_partition_fixed(rg, p, ens, tr.h_max, tr.budget);
    int h = std::max(1, tr.h_max);
    double prev = detail::log_partition_fixed(rg, p, ens, h, tr.budget);
    while (true) {
        if (h > (1 << 20)) throw TruncationError("log_partition: no convergence up to h_max = 2^20");
        int h2 = 2 * h;
        double next = detail::log_partition_fixed(rg, p, ens, h2, tr.budget);
        if (std::abs(next - prev) < tr.tol) return next;
        prev = next;
        h = h2;
    }
}

// ---------------------------------------------------------------------------
// positive-field cluster energies

namespace detail {

inline std::string shape_key(std::vector<Site> sites) {
    sites = sorted_unique(std::move(sites));
    int xm = sites[0].x, ym = sites[0].y;
    for (const Site& s : sites) {
        xm = std::min(xm, s.x);
        ym = std::min(ym, s.y);
    }
    std::string k;
    for (const Site& s : sites) {
        k += std::to_string(s.x - xm);
        k += ',';
        k += std::to_string(s.y - ym);
        k += ';';
    }
    return k;
}

/// Memoized log Z+ of a connected cluster shape at fixed truncation.
class PositiveEnergyCache {
  public:
    PositiveEnergyCache(const ModelParams& p, int h_max, std::uint64_t budget)
        : p_(p), h_max_(h_max), budget_(budget) {}

    double log_zplus(const std::vector<Site>& cluster) {
        std::string key = shape_key(cluster);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        Region rg = Region::from_sites(cluster);
        double v = log_partition_fixed(rg, p_, {EnsembleKind::Positive, 0}, h_max_, budget_);
        memo_.emplace(std::move(key), v);
        return v;
    }

    /// Excess energy sum over the maximal connected components of gamma:
    /// sum_C [ log Z+(C) - |C| log(1/(1-J^2)) ].
    double excess(const std::vector<Site>& gamma) {
        if (gamma.empty()) return 0.0;
        double H1 = small_cluster_constants(p_.beta).H1;
        double tot = 0.0;
        for (const auto& comp : connected_components(gamma))
            tot += log_zplus(comp) - double(comp.size()) * H1;
        return tot;
    }

  private:
    ModelParams p_;
    int h_max_;
    std::uint64_t budget_;
    std::map<std::string, double> memo_;
};

}  // namespace detail

/// H(Gamma) - |Gamma| log(1/(1-J^2)), summed over connected components.
/// Nonnegative; within [c1 |Gamma|, c2 |Gamma|] for connected |Gamma| >= 2.
inline double excess_pair_energy(const std::vector<Site>& gamma, const ModelParams& p,
                                 const TruncationPolicy& tr = {}) {
    if (tr.mode == TruncationPolicy::Mode::Fixed) {
        detail::PositiveEnergyCache cache(p, tr.h_max, tr.budget);
        return cache.excess(gamma);
    }
    int h = std::max(1, tr.h_max);
    detail::PositiveEnergyCache c0(p, h, tr.budget);
    double prev = c0.excess(gamma);
    while (true) {
        if (h > (1 << 20)) throw TruncationError("excess_pair_energy: no convergence");
        h *= 2;
        detail::PositiveEnergyCache c1(p, h, tr.budget);
        double next = c1.excess(gamma);
        if (std::abs(next - prev) < tr.tol) return next;
        prev = next;
    }
}

// ---------------------------------------------------------------------------
// level-set mask statistics

namespace detail {

/// Total Boltzmann weight of each level-set pattern: bin[m] is the summed
/// weight of configurations whose set {phi >= threshold} (or {phi <=
/// threshold} when ge is false) equals the bitmask m over the canonical site
/// order. Regions are limited to 20 sites.
inline std::vector<double> level_mask_weights(const Region& rg, const ModelParams& p,
                                              EnsembleKind kind, int bc, int h_max, int threshold,
                                              bool ge, std::uint64_t budget) {
    if (rg.size() > 20) throw TooLargeError("level_mask_weights: > 20 sites");
    auto [lo, hi] = height_range(kind, h_max);
    const double h_pin = pinning_reward(kind, p);
    ExpTable expH(p.beta, energy_upper_bound(rg, lo, hi, bc));
    std::vector<double> expC;
    if (kind == EnsembleKind::Wetting) {
        expC.resize(rg.size() + 1);
        for (std::size_t c = 0; c <= rg.size(); ++c) expC[c] = std::exp(h_pin * double(c));
    }
    std::vector<Accum> bins(std::size_t(1) << rg.size());
    enumerate_fields(rg, lo, hi, bc, budget, [&](const std::vector<int>& phi, long H) {
        std::uint32_t mask = 0;
        int zeros = 0;
        for (std::size_t i = 0; i < phi.size(); ++i) {
            bool in = ge ? (phi[i] >= threshold) : (phi[i] <= threshold);
            if (in) mask |= (1u << i);
            if (kind == EnsembleKind::Wetting) zeros += (phi[i] == 0);
        }
        double w = expH(H);
        if (kind == EnsembleKind::Wetting) w *= expC[std::size_t(zeros)];
        bins[mask].add(w);
    });
    std::vector<double> out(bins.size());
    for (std::size_t m = 0; m < bins.size(); ++m) out[m] = bins[m].value();
    return out;
}

/// Connected components of a bitmask over the region's site order.
inline std::vector<std::uint32_t> mask_components(const Region& rg, std::uint32_t mask) {
    std::vector<std::uint32_t> comps;
    std::uint32_t left = mask;
    while (left) {
        int seed = std::countr_zero(left);
        std::uint32_t comp = 0, frontier = 1u << seed;
        while (frontier) {
            comp |= frontier;
            std::uint32_t next = 0;
            std::uint32_t f = frontier;
            while (f) {
                int i = std::countr_zero(f);
                f &= f - 1;
                for (int d = 0; d < rg.degree(i); ++d) {
                    int j = rg.neighbors(i)[std::size_t(d)];
                    std::uint32_t bj = 1u << j;
                    if ((mask & bj) && !(comp & bj)) next |= bj;
                }
            }
            frontier = next & ~comp;
        }
        comps.push_back(comp);
        left &= ~comp;
    }
    return comps;
}

inline std::vector<Site> mask_sites(const Region& rg, std::uint32_t mask) {
    std::vector<Site> s;
    while (mask) {
        int i = std::countr_zero(mask);
        mask &= mask - 1;
        s.push_back(rg.site(i));
    }
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// identity checks

struct IdentityReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double gap = 0.0;
};

/// Wetting partition identity: log Z^h over nonnegative fields against the
/// unconstrained rewrite  sum_phi exp(-beta H(phi) + h |A| - H(A))  with
/// A = {phi <= 0} and H(A) the positive log-partition of A, computed per
/// connected component. Both sides are enumerated independently.
inline IdentityReport wetting_identity_check(const Region& rg, const ModelParams& p,
                                             const TruncationPolicy& tr = {}) {
    const int h_max = tr.h_max;
    double lhs =
        detail::log_partition_fixed(rg, p, {EnsembleKind::Wetting, 0}, h_max, tr.budget);

    detail::PositiveEnergyCache cache(p, h_max, tr.budget);
    auto bins = detail::level_mask_weights(rg, p, EnsembleKind::Free, 0, h_max, 0, false, tr.budget);
    // per-mask reward e^{h|A| - H(A)}
    Accum z;
    for (std::uint32_t m = 0; m < bins.size(); ++m) {
        if (bins[m] == 0.0) continue;
        double hpos = 0.0;
        for (std::uint32_t comp : detail::mask_components(rg, m))
            hpos += cache.log_zplus(detail::mask_sites(rg, comp));
        double reward = std::exp(p.h * double(std::popcount(m)) - hpos);
        z.add(bins[m] * reward);
    }
    double rhs = std::log(z.value());
    return {lhs, rhs, std::abs(lhs - rhs)};
}

struct ShiftComparisonReport {
    double delta = 0.0;
    double bound = 0.0;
    bool pass = false;
};

/// Free-energy comparison between boundary conditions: the gap between
/// log(Z^h / Z) and the boundary-n expectation of exp(u |A| - Hbar(A)),
/// A = {phi <= 0}, is at most beta * n * (number of boundary edges).
inline ShiftComparisonReport boundary_shift_check(const Region& rg, const ModelParams& p, int n,
                                                  const TruncationPolicy& tr = {}) {
    const int h_max = tr.h_max;
    const double u = p.u();
    double logzh = detail::log_partition_fixed(rg, p, {EnsembleKind::Wetting, 0}, h_max, tr.budget);
    double logz = detail::log_partition_fixed(rg, p, {EnsembleKind::Free, 0}, h_max, tr.budget);

    detail::PositiveEnergyCache cache(p, h_max, tr.budget);
    auto bins =
        detail::level_mask_weights(rg, p, EnsembleKind::Free, n, h_max, 0, false, tr.budget);
    Accum num, den;
    for (std::uint32_t m = 0; m < bins.size(); ++m) {
        if (bins[m] == 0.0) continue;
        den.add(bins[m]);
        double hbar = 0.0;
        for (std::uint32_t comp : detail::mask_components(rg, m))
            hbar += cache.excess(detail::mask_sites(rg, comp));
        num.add(bins[m] * std::exp(u * double(std::popcount(m)) - hbar));
    }
    double expectation = std::log(num.value() / den.value());
    std::size_t boundary_edge_count = 0;
    for (int i = 0; i < int(rg.size()); ++i) boundary_edge_count += std::size_t(rg.boundary_edges(i));
    ShiftComparisonReport r;
    r.delta = std::abs((logzh - logz) - expectation);
    r.bound = p.beta * double(n) * double(boundary_edge_count);
    r.pass = r.delta <= r.bound + 1e-12;
    return r;
}

/// G^{k,u}(Gamma) = log E+_Gamma[ exp(u |A| - Hbar(A)) ], A = {phi >= k},
/// under the positive SOS field on Gamma with zero boundary.
inline double g_exact(const std::vector<Site>& gamma, const ModelParams& p, int k, double u,
                      const TruncationPolicy& tr = {}) {
    if (gamma.empty()) throw std::invalid_argument("g_exact: empty cluster");
    Region rg = Region::from_sites(gamma);
    detail::PositiveEnergyCache cache(p, tr.h_max, tr.budget);
    auto bins = detail::level_mask_weights(rg, p, EnsembleKind::Positive, 0, tr.h_max, k, true,
                                           tr.budget);
    Accum num, den;
    for (std::uint32_t m = 0; m < bins.size(); ++m) {
        if (bins[m] == 0.0) continue;
        den.add(bins[m]);
        double hbar = 0.0;
        for (std::uint32_t comp : detail::mask_components(rg, m))
            hbar += cache.excess(detail::mask_sites(rg, comp));
        num.add(bins[m] * std::exp(u * double(std::popcount(m)) - hbar));
    }
    return std::log(num.value() / den.value());
}

/// Sign check for the pair/triple generating function: clusters of size >= 2
/// should contribute negatively for k in the admissible window.
inline bool uppg_sign_check(const std::vector<Site>& gamma, const ModelParams& p, int k, double u,
                            const TruncationPolicy& tr = {}) {
    return g_exact(gamma, p, k, u, tr) < 0.0;
}

// ---------------------------------------------------------------------------
// tail probabilities and shift inequalities

/// P[min over sites of phi >= n] under the Free ensemble with zero boundary.
inline double site_tail_prob(const Region& rg, const ModelParams& p, const std::vector<Site>& sites,
                             int n, const TruncationPolicy& tr = {}) {
    if (sites.empty() || sites.size() > 3)
        throw std::invalid_argument("site_tail_prob: 1 to 3 sites");
    for (const Site& s : sites)
        if (!rg.contains(s)) throw std::invalid_argument("site_tail_prob: site outside region");
    if (rg.is_rectangle()) {
        int xm = rg.sites()[0].x, ym = rg.sites()[0].y;
        for (const Site& s : rg.sites()) {
            xm = std::min(xm, s.x);
            ym = std::min(ym, s.y);
        }
        std::vector<detail::SiteMin> masks;
        for (const Site& s : sites) masks.push_back({{s.x - xm + 1, s.y - ym + 1}, n});
        double num = detail::rect_masked_log_partition(rg.rect_width(), rg.rect_height(), p,
                                                       EnsembleKind::Free, 0, tr.h_max, masks);
        double den = detail::rect_masked_log_partition(rg.rect_width(), rg.rect_height(), p,
                                                       EnsembleKind::Free, 0, tr.h_max);
        return std::exp(num - den);
    }
    auto bins = detail::level_mask_weights(rg, p, EnsembleKind::Free, 0, tr.h_max, n, true, tr.budget);
    std::uint32_t need = 0;
    for (const Site& s : sites) need |= 1u << rg.index_of(s);
    Accum num, den;
    for (std::uint32_t m = 0; m < bins.size(); ++m) {
        den.add(bins[m]);
        if ((m & need) == need) num.add(bins[m]);
    }
    return num.value() / den.value();
}

struct ShiftInequalityReport {
    double p_n = 0.0;
    double p_n_plus_1 = 0.0;
    double ratio = 0.0;
    double ratio_bound = 0.0;  // e^{-4 beta}, e^{-6 beta}, e^{-8 beta} for 1/2/3 sites
    double p_nonneg = 0.0;     // P[phi(first site) >= 0]
    bool pass = false;
};

/// Height-shift inequalities: raising the target level by one costs at most
/// a factor e^{-beta * c} with c = 4, 6, 8 for single sites, adjacent pairs
/// and triples; and P[phi(x) >= 0] >= 1/2 at zero boundary.
inline ShiftInequalityReport shift_inequality_check(const Region& rg, const ModelParams& p,
                                                    const std::vector<Site>& sites, int n,
                                                    const TruncationPolicy& tr = {}) {
    static const int cost[3] = {4, 6, 8};
    ShiftInequalityReport r;
    r.p_n = site_tail_prob(rg, p, sites, n, tr);
    r.p_n_plus_1 = site_tail_prob(rg, p, sites, n + 1, tr);
    r.ratio = r.p_n_plus_1 / r.p_n;
    r.ratio_bound = std::exp(-p.beta * double(cost[sites.size() - 1]));
    r.p_nonneg = site_tail_prob(rg, p, {sites.front()}, 0, tr);
    r.pass = r.ratio >= r.ratio_bound && r.p_nonneg >= 0.5;
    return r;
}

// ---------------------------------------------------------------------------
// cluster-size statistics

/// Exact distribution of q(phi, x, n) in {0, 1, 2, 3+} for every site:
/// the size class of the maximal connected component of {phi >= n}
/// containing x (0 when phi(x) < n). Free ensemble, zero boundary.
inline std::vector<std::array<double, 4>> cluster_statistics(const Region& rg, const ModelParams& p,
                                                             int n, const TruncationPolicy& tr = {}) {
    auto bins = detail::level_mask_weights(rg, p, EnsembleKind::Free, 0, tr.h_max, n, true, tr.budget);
    std::vector<std::array<Accum, 4>> acc(rg.size());
    double total = 0.0;
    for (std::uint32_t m = 0; m < bins.size(); ++m) {
        if (bins[m] == 0.0 && m != 0) continue;
        total += bins[m];
        std::array<int, 32> cls{};
        for (std::uint32_t comp : detail::mask_components(rg, m)) {
            int size = std::popcount(comp);
            int c = size >= 3 ? 3 : size;
            std::uint32_t f = comp;
            while (f) {
                int i = std::countr_zero(f);
                f &= f - 1;
                cls[std::size_t(i)] = c;
            }
        }
        for (std::size_t i = 0; i < rg.size(); ++i) acc[i][std::size_t(cls[i])].add(bins[m]);
    }
    std::vector<std::array<double, 4>> out(rg.size());
    for (std::size_t i = 0; i < rg.size(); ++i)
        for (int c = 0; c < 4; ++c) out[i][std::size_t(c)] = acc[i][std::size_t(c)].value() / total;
    return out;
}

// ---------------------------------------------------------------------------
// FKG covariance

/// Monotone observable: +/- the minimum of phi over a site list (a single
/// site gives the coordinate projection).
struct MonotoneObservable {
    std::vector<Site> sites;
    bool negate = false;
};

/// Covariance of two monotone observables under the exact truncated measure.
/// Both increasing: expected >= 0; one increasing one decreasing: <= 0.
inline double fkg_covariance(const Region& rg, const ModelParams& p, const EnsembleSpec& ens,
                             const MonotoneObservable& f, const MonotoneObservable& g,
                             const TruncationPolicy& tr = {}) {
    auto [lo, hi] = detail::height_range(ens.kind, tr.h_max);
    const int bc = ens.kind == EnsembleKind::Free ? ens.boundary_level : 0;
    const double h_pin = detail::pinning_reward(ens.kind, p);
    std::vector<int> fi, gi;
    for (const Site& s : f.sites) fi.push_back(rg.index_of(s));
    for (const Site& s : g.sites) gi.push_back(rg.index_of(s));
    if (fi.empty() || gi.empty()) throw std::invalid_argument("fkg_covariance: empty observable");
    detail::ExpTable expH(p.beta, detail::energy_upper_bound(rg, lo, hi, bc));
    Accum z, zf, zg, zfg;
    detail::enumerate_fields(rg, lo, hi, bc, tr.budget, [&](const std::vector<int>& phi, long H) {
        double w = expH(H);
        if (ens.kind == EnsembleKind::Wetting) {
            int zeros = 0;
            for (int v : phi) zeros += (v == 0);
            w *= std::exp(h_pin * double(zeros));
        }
        int fv = phi[std::size_t(fi[0])], gv = phi[std::size_t(gi[0])];
        for (int i : fi) fv = std::min(fv, phi[std::size_t(i)]);
        for (int i : gi) gv = std::min(gv, phi[std::size_t(i)]);
        double fd = f.negate ? -double(fv) : double(fv);
        double gd = g.negate ? -double(gv) : double(gv);
        z.add(w);
        zf.add(w * fd);
        zg.add(w * gd);
        zfg.add(w * fd * gd);
    });
    double Z = z.value();
    return zfg.value() / Z - (zf.value() / Z) * (zg.value() / Z);
}

}  // namespace sos
