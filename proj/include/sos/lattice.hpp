// Finite subsets of Z^2 with cached adjacency and external boundary.
// Geometric substrate for the SOS height fields: regions, connectivity,
// parity classes, simple-connectivity.
#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace sos {

struct Site {
    int x = 0;
    int y = 0;

    // Canonical order is lexicographic in (y, x) so that site sets have a
    // unique sorted form and all set-valued outputs are byte-stable.
    friend constexpr auto operator<=>(const Site& a, const Site& b) {
        if (auto c = a.y <=> b.y; c != 0) return c;
        return a.x <=> b.x;
    }
    friend constexpr bool operator==(const Site&, const Site&) = default;
};

struct SiteHash {
    std::size_t operator()(const Site& s) const noexcept {
        std::uint64_t k = (std::uint64_t(std::uint32_t(s.x)) << 32) | std::uint32_t(s.y);
        k ^= k >> 33;
        k *= 0xff51afd7ed558ccdULL;
        k ^= k >> 33;
        return std::size_t(k);
    }
};

inline const std::array<Site, 4>& neighbor_steps() {
    static const std::array<Site, 4> steps{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
    return steps;
}

inline std::vector<Site> sorted_unique(std::vector<Site> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

/// A finite site set Lambda with its external boundary
///   dLambda = { x not in Lambda : exists y in Lambda, x ~ y }
/// and per-site nearest-neighbor adjacency inside the set. Immutable after
/// construction; derived caches are computed eagerly so values can be shared
/// freely across worker threads.
class Region {
  public:
    static Region from_sites(std::vector<Site> sites) { return Region(sorted_unique(std::move(sites))); }

    /// Rectangle [1,width] x [1,height] (the standard box geometry).
    static Region rectangle(int width, int height) {
        if (width < 1 || height < 1)
            throw std::invalid_argument("Region::rectangle: dimensions must be >= 1");
        std::vector<Site> s;
        s.reserve(std::size_t(width) * std::size_t(height));
        for (int y = 1; y <= height; ++y)
            for (int x = 1; x <= width; ++x) s.push_back({x, y});
        return Region(std::move(s));
    }

    const std::vector<Site>& sites() const { return sites_; }
    const std::vector<Site>& boundary() const { return boundary_; }
    std::size_t size() const { return sites_.size(); }

    bool contains(Site s) const { return index_.count(s) != 0; }
    /// Index of a site in canonical order, or -1.
    int index_of(Site s) const {
        auto it = index_.find(s);
        return it == index_.end() ? -1 : it->second;
    }
    Site site(int i) const { return sites_[std::size_t(i)]; }

    /// Indices of the nearest neighbors of sites_[i] inside the region.
    const std::array<int, 4>& neighbors(int i) const { return adj_[std::size_t(i)]; }
    int degree(int i) const { return deg_[std::size_t(i)]; }
    /// Number of boundary edges at sites_[i] (edges leaving the region);
    /// degree(i) + boundary_edges(i) == 4 on Z^2.
    int boundary_edges(int i) const { return 4 - deg_[std::size_t(i)]; }

    bool is_rectangle() const { return rect_w_ > 0; }
    int rect_width() const { return rect_w_; }
    int rect_height() const { return rect_h_; }

  private:
    explicit Region(std::vector<Site> sorted) : sites_(std::move(sorted)) {
        index_.reserve(sites_.size() * 2);
        for (std::size_t i = 0; i < sites_.size(); ++i) index_[sites_[i]] = int(i);
        adj_.assign(sites_.size(), {-1, -1, -1, -1});
        deg_.assign(sites_.size(), 0);
        std::vector<Site> bnd;
        for (std::size_t i = 0; i < sites_.size(); ++i) {
            for (const Site& d : neighbor_steps()) {
                Site n{sites_[i].x + d.x, sites_[i].y + d.y};
                int j = index_of(n);
                if (j >= 0)
                    adj_[i][std::size_t(deg_[i]++)] = j;
                else
                    bnd.push_back(n);
            }
        }
        boundary_ = sorted_unique(std::move(bnd));
        if (!sites_.empty()) {
            int xmin = sites_[0].x, xmax = xmin, ymin = sites_[0].y, ymax = ymin;
            for (const Site& s : sites_) {
                xmin = std::min(xmin, s.x);
                xmax = std::max(xmax, s.x);
                ymin = std::min(ymin, s.y);
                ymax = std::max(ymax, s.y);
            }
            std::size_t area = std::size_t(xmax - xmin + 1) * std::size_t(ymax - ymin + 1);
            if (area == sites_.size()) {
                rect_w_ = xmax - xmin + 1;
                rect_h_ = ymax - ymin + 1;
            }
        }
    }

    std::vector<Site> sites_;
    std::vector<Site> boundary_;
    std::vector<std::array<int, 4>> adj_;
    std::vector<int> deg_;
    std::unordered_map<Site, int, SiteHash> index_;
    int rect_w_ = 0, rect_h_ = 0;
};

/// Integer heights on a region plus the level assigned to every external
/// boundary site.
struct HeightField {
    std::shared_ptr<const Region> region;
    std::vector<int> heights;  // heights[i] belongs to region->sites()[i]
    int boundary_level = 0;

    HeightField() = default;
    HeightField(std::shared_ptr<const Region> r, int level)
        : region(std::move(r)), heights(region->size(), level), boundary_level(level) {}
    HeightField(std::shared_ptr<const Region> r, std::vector<int> h, int level)
        : region(std::move(r)), heights(std::move(h)), boundary_level(level) {
        if (heights.size() != region->size())
            throw std::invalid_argument("HeightField: heights must match region sites");
    }

    int at(int i) const { return heights[std::size_t(i)]; }
    /// Height with the boundary convention phi(y) = boundary_level off-region.
    int value(Site s) const {
        int i = region->index_of(s);
        return i < 0 ? boundary_level : heights[std::size_t(i)];
    }
};

/// Maximal nearest-neighbor connected components, ordered by least site;
/// each component is emitted sorted.
inline std::vector<std::vector<Site>> connected_components(const std::vector<Site>& input) {
    std::vector<Site> sites = sorted_unique(input);
    std::unordered_map<Site, int, SiteHash> idx;
    for (std::size_t i = 0; i < sites.size(); ++i) idx[sites[i]] = int(i);
    std::vector<char> seen(sites.size(), 0);
    std::vector<std::vector<Site>> comps;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        if (seen[i]) continue;
        std::vector<Site> comp;
        std::vector<int> stack{int(i)};
        seen[i] = 1;
        while (!stack.empty()) {
            int c = stack.back();
            stack.pop_back();
            comp.push_back(sites[std::size_t(c)]);
            for (const Site& d : neighbor_steps()) {
                Site n{sites[std::size_t(c)].x + d.x, sites[std::size_t(c)].y + d.y};
                auto it = idx.find(n);
                if (it != idx.end() && !seen[std::size_t(it->second)]) {
                    seen[std::size_t(it->second)] = 1;
                    stack.push_back(it->second);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
    }
    // components inherit the order of their least site (the DFS seeds scan
    // the canonical order, so this is already sorted)
    return comps;
}

/// True iff the region has no holes: the complement within an inflated
/// bounding rectangle, plus the exterior, is a single component.
inline bool is_simply_connected(const Region& region) {
    if (region.size() == 0) throw std::invalid_argument("is_simply_connected: empty region");
    if (connected_components(region.sites()).size() != 1)
        throw std::invalid_argument("is_simply_connected: region must be connected");
    int xmin = region.sites()[0].x, xmax = xmin, ymin = region.sites()[0].y, ymax = ymin;
    for (const Site& s : region.sites()) {
        xmin = std::min(xmin, s.x);
        xmax = std::max(xmax, s.x);
        ymin = std::min(ymin, s.y);
        ymax = std::max(ymax, s.y);
    }
    // flood the complement from a corner of the inflated box
    const int W = xmax - xmin + 3, H = ymax - ymin + 3;
    auto inside = [&](int x, int y) { return x >= 0 && x < W && y >= 0 && y < H; };
    std::vector<char> occ(std::size_t(W) * std::size_t(H), 0), seen(std::size_t(W) * std::size_t(H), 0);
    for (const Site& s : region.sites()) occ[std::size_t(s.y - ymin + 1) * W + std::size_t(s.x - xmin + 1)] = 1;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    seen[0] = 1;
    std::size_t reached = 0;
    while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        ++reached;
        for (const Site& d : neighbor_steps()) {
            int nx = x + d.x, ny = y + d.y;
            if (!inside(nx, ny)) continue;
            std::size_t k = std::size_t(ny) * W + std::size_t(nx);
            if (!occ[k] && !seen[k]) {
                seen[k] = 1;
                stack.emplace_back(nx, ny);
            }
        }
    }
    return reached == std::size_t(W) * std::size_t(H) - region.size();
}

/// Split into (even, odd) parity classes; x + y even goes to the even class.
inline std::pair<std::vector<Site>, std::vector<Site>> parity_split(const Region& region) {
    std::pair<std::vector<Site>, std::vector<Site>> out;
    for (const Site& s : region.sites()) {
        if (((s.x + s.y) & 1) == 0)
            out.first.push_back(s);
        else
            out.second.push_back(s);
    }
    return out;
}

}  // namespace sos
