// Level-line calculus for SOS height fields: decomposition of a field into
// signed cylinders (geometric contour + sign + intensity), compatibility,
// reconstruction, exact contour enumeration and Peierls sums.
//
// Dual-lattice conventions. A dual vertex (x, y) stands for the point
// (x + 1/2, y + 1/2); dual edges join dual vertices at distance one. Where
// four level-line edges meet at a dual vertex, the two edges on the same
// side of the slope-+1 diagonal through that vertex are linked: {N, W} form
// one corner and {S, E} the other. Consequently peaks adjacent along the
// (+1,+1) diagonal merge into a single contour while (+1,-1) neighbors stay
// separate.
#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "sos/exact.hpp"
#include "sos/lattice.hpp"

namespace sos {

struct UnsupportedRegionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DualVertex {
    int x = 0;
    int y = 0;
    friend constexpr auto operator<=>(const DualVertex& a, const DualVertex& b) {
        if (auto c = a.y <=> b.y; c != 0) return c;
        return a.x <=> b.x;
    }
    friend constexpr bool operator==(const DualVertex&, const DualVertex&) = default;
};

struct DualVertexHash {
    std::size_t operator()(const DualVertex& v) const noexcept {
        return SiteHash{}(Site{v.x, v.y});
    }
};

/// Orientation-free dual edge, stored from its lower-left endpoint.
/// dir == 0: east edge to (x+1, y); dir == 1: north edge to (x, y+1).
struct DualEdge {
    DualVertex v;
    std::uint8_t dir = 0;

    DualVertex a() const { return v; }
    DualVertex b() const { return dir == 0 ? DualVertex{v.x + 1, v.y} : DualVertex{v.x, v.y + 1}; }

    /// The two primal sites this edge separates: the north edge through
    /// (x+1/2, y+1) splits (x, y+1) | (x+1, y+1); the east edge through
    /// (x+1, y+1/2) splits (x+1, y) | (x+1, y+1).
    std::pair<Site, Site> sides() const {
        if (dir == 1) return {Site{v.x, v.y + 1}, Site{v.x + 1, v.y + 1}};
        return {Site{v.x + 1, v.y}, Site{v.x + 1, v.y + 1}};
    }

    friend constexpr auto operator<=>(const DualEdge& a, const DualEdge& b) {
        if (auto c = a.v <=> b.v; c != 0) return c;
        return a.dir <=> b.dir;
    }
    friend constexpr bool operator==(const DualEdge&, const DualEdge&) = default;
};

namespace contour_detail {

/// Dual edge crossing the primal bond {p, q} (nearest neighbors).
inline DualEdge edge_between(Site p, Site q) {
    if (p > q) std::swap(p, q);
    if (q.x == p.x + 1 && q.y == p.y) return DualEdge{{p.x, p.y - 1}, 1};  // vertical dual edge
    if (q.x == p.x && q.y == p.y + 1) return DualEdge{{p.x - 1, p.y}, 0};  // horizontal dual edge
    throw std::invalid_argument("edge_between: sites are not nearest neighbors");
}

enum class Role : std::uint8_t { N, S, E, W };

/// How edge e attaches to one of its endpoints w.
inline Role role_at(const DualEdge& e, const DualVertex& w) {
    if (e.dir ==  1) return e.v == w ? Role::N : Role::S;
    return e.v == w ? Role::E : Role::W;
}

/// The slope-+1 splitting rule: {N, W} and {S, E} are the linked corners.
inline bool linked(Role r1, Role r2) {
    auto side = [](Role r) { return r == Role::N || r == Role::W; };
    return side(r1) == side(r2) && r1 != r2;
}

/// Split an even-degree dual edge set into cycles: at degree-2 vertices the
/// two edges continue one another, at degree-4 vertices the linked pairs do.
inline std::vector<std::vector<DualEdge>> trace_cycles(const std::vector<DualEdge>& edges) {
    std::unordered_map<DualVertex, std::vector<int>, DualVertexHash> at;
    for (int i = 0; i < int(edges.size()); ++i) {
        at[edges[std::size_t(i)].a()].push_back(i);
        at[edges[std::size_t(i)].b()].push_back(i);
    }
    // partner[i] = {next edge when leaving through a(), through b()}
    auto partner_at = [&](int i, const DualVertex& w) -> int {
        const auto& inc = at[w];
        if (inc.size() == 2) return inc[0] == i ? inc[1] : inc[0];
        if (inc.size() == 4) {
            Role mine = role_at(edges[std::size_t(i)], w);
            for (int j : inc)
                if (j != i && linked(mine, role_at(edges[std::size_t(j)], w))) return j;
        }
        throw std::logic_error("trace_cycles: dual vertex degree not in {2,4}");
    };
    std::vector<char> used(edges.size(), 0);
    std::vector<std::vector<DualEdge>> cycles;
    for (int i = 0; i < int(edges.size()); ++i) {
        if (used[std::size_t(i)]) continue;
        std::vector<DualEdge> cyc;
        int cur = i;
        DualVertex w = edges[std::size_t(i)].a();  // walk out of a()
        while (!used[std::size_t(cur)]) {
            used[std::size_t(cur)] = 1;
            cyc.push_back(edges[std::size_t(cur)]);
            w = (edges[std::size_t(cur)].a() == w) ? edges[std::size_t(cur)].b()
                                                   : edges[std::size_t(cur)].a();
            cur = partner_at(cur, w);
        }
        std::sort(cyc.begin(), cyc.end());
        cycles.push_back(std::move(cyc));
    }
    return cycles;
}

/// Primal sites enclosed by a closed edge set (even-odd rule, row sweep over
/// the vertical edges).
inline std::vector<Site> enclosed_sites(const std::vector<DualEdge>& edges) {
    // vertical edge {(i, b-1), N} crosses row y = b at x = i + 1/2
    std::map<int, std::vector<int>> rows;  // row b -> sorted i's
    for (const DualEdge& e : edges)
        if (e.dir == 1) rows[e.v.y + 1].push_back(e.v.x);
    std::vector<Site> inside;
    for (auto& [b, xs] : rows) {
        std::sort(xs.begin(), xs.end());
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2)
            for (int a = xs[k] + 1; a <= xs[k + 1]; ++a) inside.push_back({a, b});
    }
    return sorted_unique(std::move(inside));
}

inline bool site_in(const std::vector<Site>& sorted, Site s) {
    return std::binary_search(sorted.begin(), sorted.end(), s);
}

}  // namespace contour_detail

/// A geometric contour: a single closed dual cycle obeying the linking rule,
/// with its enclosed sites and the inner/outer neighborhoods. The
/// neighborhood holds every site across a primal bond from the cycle plus,
/// at each meeting point of two non-linked contour edges, the four sites at
/// distance 1/sqrt(2) from that point.
struct GeometricContour {
    std::vector<DualEdge> edges;    // sorted, canonical
    std::vector<Site> interior;     // enclosed sites, sorted
    std::vector<Site> delta_minus;  // neighborhood inside the interior
    std::vector<Site> delta_plus;   // neighborhood outside

    int length() const { return int(edges.size()); }

    static GeometricContour from_edges(std::vector<DualEdge> cycle) {
        using namespace contour_detail;
        GeometricContour g;
        std::sort(cycle.begin(), cycle.end());
        g.edges = std::move(cycle);
        g.interior = enclosed_sites(g.edges);
        std::vector<Site> delta;
        for (const DualEdge& e : g.edges) {
            auto [s1, s2] = e.sides();
            delta.push_back(s1);
            delta.push_back(s2);
        }
        std::unordered_map<DualVertex, std::vector<const DualEdge*>, DualVertexHash> at;
        for (const DualEdge& e : g.edges) {
            at[e.a()].push_back(&e);
            at[e.b()].push_back(&e);
        }
        for (const auto& [w, inc] : at) {
            bool corner = false;
            for (std::size_t i = 0; i < inc.size() && !corner; ++i)
                for (std::size_t j = i + 1; j < inc.size() && !corner; ++j)
                    corner = !linked(role_at(*inc[i], w), role_at(*inc[j], w));
            if (corner)
                for (int dx = 0; dx <= 1; ++dx)
                    for (int dy = 0; dy <= 1; ++dy) delta.push_back({w.x + dx, w.y + dy});
        }
        delta = sorted_unique(std::move(delta));
        for (const Site& s : delta)
            (site_in(g.interior, s) ? g.delta_minus : g.delta_plus).push_back(s);
        return g;
    }

    friend bool operator==(const GeometricContour& a, const GeometricContour& b) {
        return a.edges == b.edges;
    }
    friend auto operator<=>(const GeometricContour& a, const GeometricContour& b) {
        return a.edges <=> b.edges;
    }
};

/// A signed contour with a positive integer intensity (number of stacked
/// level lines).
struct Cylinder {
    GeometricContour contour;
    int sign = +1;  // +1: interior higher than exterior
    int intensity = 1;
};

struct CylinderSet {
    std::vector<Cylinder> cylinders;
    std::size_t size() const { return cylinders.size(); }
};

/// Pairwise compatibility: the two signed contours can coexist as cylinders
/// of one field. Independent of the intensities.
inline bool compatible(const Cylinder& a, const Cylinder& b) {
    using namespace contour_detail;
    if (a.contour.edges == b.contour.edges) return false;
    // interiors must nest or be disjoint
    std::vector<Site> inter;
    std::set_intersection(a.contour.interior.begin(), a.contour.interior.end(),
                          b.contour.interior.begin(), b.contour.interior.end(),
                          std::back_inserter(inter));
    const bool disjoint = inter.empty();
    const bool a_in_b = inter.size() == a.contour.interior.size();
    const bool b_in_a = inter.size() == b.contour.interior.size();
    if (!disjoint && !a_in_b && !b_in_a) return false;
    if (a.sign == b.sign && disjoint) {
        // same sign side by side: neither interior may touch the other's
        // outer collar
        for (const Site& s : b.contour.interior)
            if (site_in(a.contour.delta_plus, s)) return false;
        for (const Site& s : a.contour.interior)
            if (site_in(b.contour.delta_plus, s)) return false;
    } else if (a.sign != b.sign && !disjoint) {
        // opposite sign nested: the inner contour must avoid the outer's
        // inner collar
        const Cylinder& outer = b_in_a ? a : b;
        const Cylinder& inner = b_in_a ? b : a;
        for (const Site& s : inner.contour.interior)
            if (site_in(outer.contour.delta_minus, s)) return false;
    }
    return true;
}

/// Level-line decomposition of a field on a simply connected region,
/// relative to its boundary level. Heights off the region are taken equal
/// to the boundary level. Identical geometric contours appearing on
/// consecutive levels merge into one cylinder carrying that intensity.
inline CylinderSet decompose(const HeightField& f) {
    using namespace contour_detail;
    const Region& rg = *f.region;
    if (!is_simply_connected(rg))
        throw UnsupportedRegionError("decompose: region must be simply connected");
    const int bc = f.boundary_level;
    int lev_min = bc, lev_max = bc;
    for (int h : f.heights) {
        lev_min = std::min(lev_min, h);
        lev_max = std::max(lev_max, h);
    }
    struct Entry {
        int sign = 0;
        int first_level = 0;
        int count = 0;
        int last_level = 0;
    };
    std::map<std::vector<DualEdge>, Entry> found;
    for (int lev = lev_min + 1; lev <= lev_max; ++lev) {
        auto in_set = [&](Site s) {
            int i = rg.index_of(s);
            return (i >= 0 ? f.at(i) : bc) >= lev;
        };
        std::vector<DualEdge> edges;
        for (int i = 0; i < int(rg.size()); ++i) {
            Site s = rg.site(i);
            for (const Site& d : neighbor_steps()) {
                Site nb{s.x + d.x, s.y + d.y};
                if (rg.contains(nb) && nb < s) continue;  // each bond once
                if (in_set(s) != in_set(nb)) edges.push_back(edge_between(s, nb));
            }
        }
        std::sort(edges.begin(), edges.end());
        for (auto& cyc : trace_cycles(edges)) {
            // orientation: the interior side of any edge tells the sign
            auto enclosed = enclosed_sites(cyc);
            auto [s1, s2] = cyc.front().sides();
            Site probe = site_in(enclosed, s1) ? s1 : s2;
            int sign = in_set(probe) ? +1 : -1;
            auto [it, fresh] = found.try_emplace(std::move(cyc));
            Entry& e = it->second;
            if (fresh) {
                e.sign = sign;
                e.first_level = lev;
                e.count = 1;
                e.last_level = lev;
            } else {
                if (e.sign != sign || e.last_level != lev - 1)
                    throw std::logic_error("decompose: non-contiguous contour levels");
                ++e.count;
                e.last_level = lev;
            }
        }
    }
    CylinderSet out;
    for (auto& [edges, e] : found) {
        Cylinder c;
        c.contour = GeometricContour::from_edges(edges);
        c.sign = e.sign;
        c.intensity = e.count;
        out.cylinders.push_back(std::move(c));
    }
    return out;
}

/// Rebuild the field from a compatible cylinder collection:
/// phi(x) = boundary_level + sum of sign * intensity over cylinders whose
/// interior contains x.
inline HeightField reconstruct(const CylinderSet& cs, std::shared_ptr<const Region> region,
                               int boundary_level) {
    for (std::size_t i = 0; i < cs.cylinders.size(); ++i) {
        for (const Site& s : cs.cylinders[i].contour.interior)
            if (!region->contains(s))
                throw std::invalid_argument("reconstruct: cylinder interior leaves the region");
        for (std::size_t j = i + 1; j < cs.cylinders.size(); ++j)
            if (!compatible(cs.cylinders[i], cs.cylinders[j]))
                throw std::invalid_argument("reconstruct: incompatible cylinder collection");
    }
    HeightField f(std::move(region), boundary_level);
    for (const Cylinder& c : cs.cylinders)
        for (const Site& s : c.contour.interior)
            f.heights[std::size_t(f.region->index_of(s))] += c.sign * c.intensity;
    return f;
}

/// Total energy carried by the cylinders: sum of intensity * length. Equals
/// the Hamiltonian of the reconstructed field, exactly.
inline long contour_energy(const CylinderSet& cs) {
    long e = 0;
    for (const Cylinder& c : cs.cylinders) e += long(c.intensity) * c.contour.length();
    return e;
}

/// Intensity of a prescribed signed contour in a field: the minimal signed
/// drop between the inner and outer collars, clamped at zero when the
/// contour is not a level line of the field.
inline int intensity_of(const HeightField& f, const GeometricContour& g, int sign) {
    int inner_min = INT32_MAX, inner_max = INT32_MIN;
    for (const Site& s : g.delta_minus) {
        int v = f.value(s);
        inner_min = std::min(inner_min, v);
        inner_max = std::max(inner_max, v);
    }
    int outer_min = INT32_MAX, outer_max = INT32_MIN;
    for (const Site& s : g.delta_plus) {
        int v = f.value(s);
        outer_min = std::min(outer_min, v);
        outer_max = std::max(outer_max, v);
    }
    int k = sign > 0 ? inner_min - outer_max : outer_min - inner_max;
    return std::max(k, 0);
}

// ---------------------------------------------------------------------------
// exact contour enumeration

/// Counts of geometric contours enclosing a marked site, grouped by length.
/// Depth-first growth of dual cycles under the linking discipline; exact,
/// deduplicated by rooting each cycle at its minimal edge.
inline std::map<int, long> enumerate_contours(Site marked, int max_length) {
    using namespace contour_detail;
    if (max_length < 4 || (max_length & 1))
        throw std::invalid_argument("enumerate_contours: max_length must be even and >= 4");
    if (max_length > 20) throw TooLargeError("enumerate_contours: max_length > 20");

    const int half = max_length / 2 + 1;
    auto in_window = [&](const DualVertex& v) {
        return std::abs(v.x - marked.x) <= half && std::abs(v.y - marked.y) <= half;
    };
    // all candidate edges in the window, ascending
    std::vector<DualEdge> candidates;
    for (int y = marked.y - half; y <= marked.y + half; ++y)
        for (int x = marked.x - half; x <= marked.x + half; ++x)
            for (std::uint8_t dir : {std::uint8_t(0), std::uint8_t(1)}) {
                DualEdge e{{x, y}, dir};
                if (in_window(e.a()) && in_window(e.b())) candidates.push_back(e);
            }
    std::sort(candidates.begin(), candidates.end());

    std::map<int, long> counts;
    struct VertexRec {
        int pairs = 0;
        bool all_linked = true;
    };
    std::unordered_map<DualVertex, VertexRec, DualVertexHash> vrec;
    std::vector<DualEdge> used;

    auto l1 = [](const DualVertex& a, const DualVertex& b) {
        return std::abs(a.x - b.x) + std::abs(a.y - b.y);
    };
    auto marked_inside = [&]() {
        int crossings = 0;
        for (const DualEdge& e : used)
            if (e.dir == 1 && e.v.y + 1 == marked.y && e.v.x < marked.x) ++crossings;
        return (crossings & 1) == 1;
    };

    for (const DualEdge& e0 : candidates) {
        const DualVertex start = e0.a();
        used.assign(1, e0);
        vrec.clear();

        auto dfs = [&](auto&& self, DualVertex cur, DualEdge prev) -> void {
            const Role role_in = role_at(prev, cur);
            // choose the outgoing edge among the four incident to cur
            for (int cand = 0; cand < 4; ++cand) {
                DualEdge e;
                switch (cand) {
                    case 0: e = DualEdge{cur, 1}; break;                       // N
                    case 1: e = DualEdge{cur, 0}; break;                       // E
                    case 2: e = DualEdge{{cur.x, cur.y - 1}, 1}; break;        // S
                    case 3: e = DualEdge{{cur.x - 1, cur.y}, 0}; break;        // W
                }
                if (!(e0 < e)) continue;
                if (!in_window(e.a()) || !in_window(e.b())) continue;
                if (std::find(used.begin(), used.end(), e) != used.end()) continue;
                const Role role_out = role_at(e, cur);
                const bool pair_linked = linked(role_in, role_out);
                VertexRec& rec = vrec[cur];
                if (rec.pairs >= 2) continue;
                if (rec.pairs == 1 && (!rec.all_linked || !pair_linked)) continue;

                DualVertex nxt = (e.a() == cur) ? e.b() : e.a();
                if (int(used.size()) + 1 + l1(nxt, start) > max_length) continue;

                rec.pairs += 1;
                bool saved_linked = rec.all_linked;
                rec.all_linked = rec.all_linked && pair_linked;
                used.push_back(e);

                if (nxt == start && used.size() >= 4) {
                    // closing pair (e, e0) at the start vertex
                    VertexRec& rs = vrec[start];
                    bool close_linked = linked(role_at(e, start), role_at(e0, start));
                    bool ok = rs.pairs == 0 || (rs.all_linked && close_linked && rs.pairs < 2);
                    if (ok && marked_inside()) ++counts[int(used.size())];
                }
                // keep walking; passing through the start vertex is a legal
                // double visit, resolved by the discipline above
                self(self, nxt, e);

                used.pop_back();
                rec.pairs -= 1;
                rec.all_linked = saved_linked;
            }
        };
        dfs(dfs, e0.b(), e0);
    }
    return counts;
}

struct PeierlsSum {
    std::map<int, long> counts;
    double partial_sum = 0.0;
    double growth_rate = 0.0;  // fitted exponential base of count(l)^{1/l}
};

/// Truncated Peierls sum over contours enclosing the origin:
/// sum over lengths l <= max_length of count(l) e^{-beta l}, plus the
/// exponential growth base fitted on the top three lengths.
inline PeierlsSum peierls_sum(const ModelParams& p, int max_length) {
    PeierlsSum out;
    out.counts = enumerate_contours({0, 0}, max_length);
    for (const auto& [len, cnt] : out.counts)
        out.partial_sum += double(cnt) * std::exp(-p.beta * double(len));
    std::vector<std::pair<double, double>> pts;  // (length, log count)
    for (auto it = out.counts.rbegin(); it != out.counts.rend() && pts.size() < 3; ++it)
        if (it->second > 0) pts.push_back({double(it->first), std::log(double(it->second))});
    if (pts.size() >= 2) {
        double mx = 0, my = 0;
        for (auto& [x, y] : pts) {
            mx += x;
            my += y;
        }
        mx /= double(pts.size());
        my /= double(pts.size());
        double num = 0, den = 0;
        for (auto& [x, y] : pts) {
            num += (x - mx) * (y - my);
            den += (x - mx) * (x - mx);
        }
        out.growth_rate = std::exp(num / den);
    }
    return out;
}

}  // namespace sos
