#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace napa {

// Finite regular lattice with unit spacing. Coordinates run from 1 to the
// per-dimension extent; sites are enumerated row-major (last dimension varies
// fastest), so site 0 is (1,...,1). That ordering is the canonical
// serialization order for every per-site vector in the library.
struct SpatialGrid {
    std::vector<int> extents;
    std::vector<double> coords;  // site-major, extents.size() entries per site

    int dimension() const { return static_cast<int>(extents.size()); }
    std::size_t site_count() const {
        return extents.empty() ? 0 : coords.size() / extents.size();
    }
    double coord(std::size_t site, int dim) const {
        return coords[site * extents.size() + static_cast<std::size_t>(dim)];
    }
};

inline SpatialGrid build_grid(const std::vector<int>& extents,
                              std::size_t site_cap = 10000000) {
    if (extents.empty()) throw std::invalid_argument("build_grid: extents must be non-empty");
    std::size_t m = 1;
    for (int e : extents) {
        if (e < 1) throw std::invalid_argument("build_grid: extents must be positive");
        if (m > site_cap / static_cast<std::size_t>(e))
            throw std::invalid_argument("build_grid: site count exceeds cap of " +
                                        std::to_string(site_cap));
        m *= static_cast<std::size_t>(e);
    }
    SpatialGrid grid;
    grid.extents = extents;
    const std::size_t b = extents.size();
    grid.coords.resize(m * b);
    std::vector<int> c(b, 1);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < b; ++k) grid.coords[i * b + k] = static_cast<double>(c[k]);
        for (std::size_t k = b; k-- > 0;) {  // odometer, last dimension fastest
            if (++c[k] <= extents[k]) break;
            c[k] = 1;
        }
    }
    return grid;
}

inline double spatial_distance(const SpatialGrid& grid, std::size_t i, std::size_t j) {
    const std::size_t m = grid.site_count();
    if (i >= m || j >= m) throw std::out_of_range("spatial_distance: site index out of range");
    const std::size_t b = grid.extents.size();
    double sq = 0.0;
    for (std::size_t k = 0; k < b; ++k) {
        double d = grid.coords[i * b + k] - grid.coords[j * b + k];
        sq += d * d;
    }
    return std::sqrt(sq);
}

// Axis-aligned box with closed integer bounds per dimension and the value the
// field takes inside it.
struct RegionBox {
    std::vector<std::array<int, 2>> ranges;  // {lo, hi} per dimension
    double value = 0.0;
};

// Piecewise-constant field over the lattice: the first box containing a site
// wins, sites in no box take the baseline. Values live in [0,1]; the closed
// endpoints are admitted so pure-null (0) and saturated (1) generative fields
// are expressible.
struct RegionSpec {
    std::vector<RegionBox> boxes;
    double baseline = 0.0;
};

inline void validate_region_spec(const SpatialGrid& grid, const RegionSpec& spec) {
    if (!(spec.baseline >= 0.0 && spec.baseline <= 1.0))
        throw std::invalid_argument("region spec: baseline must lie in [0,1]");
    const std::size_t b = grid.extents.size();
    for (const RegionBox& box : spec.boxes) {
        if (!(box.value >= 0.0 && box.value <= 1.0))
            throw std::invalid_argument("region spec: box value must lie in [0,1]");
        if (box.ranges.size() != b)
            throw std::invalid_argument("region spec: box dimension does not match grid");
        for (std::size_t k = 0; k < b; ++k) {
            if (box.ranges[k][0] < 1 || box.ranges[k][1] > grid.extents[k] ||
                box.ranges[k][0] > box.ranges[k][1])
                throw std::invalid_argument("region spec: box exceeds grid extents");
        }
    }
}

inline std::vector<double> evaluate_region_field(const SpatialGrid& grid,
                                                 const RegionSpec& spec) {
    validate_region_spec(grid, spec);
    const std::size_t m = grid.site_count();
    const std::size_t b = grid.extents.size();
    std::vector<double> field(m, spec.baseline);
    for (std::size_t i = 0; i < m; ++i) {
        for (const RegionBox& box : spec.boxes) {
            bool inside = true;
            for (std::size_t k = 0; k < b; ++k) {
                double c = grid.coords[i * b + k];
                if (c < box.ranges[k][0] || c > box.ranges[k][1]) {
                    inside = false;
                    break;
                }
            }
            if (inside) {
                field[i] = box.value;
                break;
            }
        }
    }
    return field;
}

}  // namespace napa
