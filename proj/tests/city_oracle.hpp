#pragma once

#include "procsplat/citygen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace procsplat::test_support {

// Geometry oracles written independently of the library's Boost-based code paths.

inline double shoelace(const Polygon2& p) {
    double a = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const Vec2& u = p[i];
        const Vec2& v = p[(i + 1) % p.size()];
        a += u.x() * v.y() - v.x() * u.y();
    }
    return 0.5 * a;
}

/// Sutherland-Hodgman: clips any polygon against a convex counter-clockwise window.
inline Polygon2 clip_convex(const Polygon2& subject, const Polygon2& window) {
    Polygon2 out = subject;
    for (std::size_t i = 0; i < window.size() && !out.empty(); ++i) {
        const Vec2 a = window[i], b = window[(i + 1) % window.size()];
        auto side = [&](const Vec2& p) { return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x()); };
        Polygon2 in = std::move(out);
        out.clear();
        for (std::size_t k = 0; k < in.size(); ++k) {
            const Vec2 p = in[k], q = in[(k + 1) % in.size()];
            const double sp = side(p), sq = side(q);
            if (sp >= 0.0) out.push_back(p);
            if ((sp >= 0.0) != (sq >= 0.0)) out.push_back(p + (q - p) * (sp / (sp - sq)));
        }
    }
    return out;
}

/// Rectangle of a road segment, built from the endpoints without the library helper.
inline Polygon2 road_rect(const Vec2& a, const Vec2& b, double width) {
    const Vec2 d = (b - a) / (b - a).norm();
    const Vec2 n(-d.y() * width / 2, d.x() * width / 2);
    return {a - n, b - n, b + n, a + n};
}

/// Area of the boundary covered by the union of the roads, by inclusion-exclusion
/// over road subsets (each term is the boundary clipped by every road in the subset).
inline double road_area_inside(const Polygon2& boundary, const std::vector<Road>& roads) {
    const std::size_t n = roads.size();
    double total = 0.0;
    for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
        Polygon2 piece = boundary;
        int bits = 0;
        for (std::size_t r = 0; r < n; ++r)
            if (mask >> r & 1) {
                piece = clip_convex(piece, road_rect(roads[r].a, roads[r].b, roads[r].width));
                ++bits;
            }
        total += (bits % 2 ? 1.0 : -1.0) * std::abs(shoelace(piece));
    }
    return total;
}

inline bool in_ring(const Polygon2& ring, const Vec2& p) {
    // Winding number.
    int wn = 0;
    for (std::size_t i = 0; i < ring.size(); ++i) {
        const Vec2& a = ring[i];
        const Vec2& b = ring[(i + 1) % ring.size()];
        const double c = (b.x() - a.x()) * (p.y() - a.y()) - (p.x() - a.x()) * (b.y() - a.y());
        if (a.y() <= p.y()) {
            if (b.y() > p.y() && c > 0) ++wn;
        } else if (b.y() <= p.y() && c < 0) {
            --wn;
        }
    }
    return wn != 0;
}

inline bool in_block(const Block& b, const Vec2& p) {
    if (!in_ring(b.outer, p)) return false;
    return std::none_of(b.holes.begin(), b.holes.end(), [&](const Polygon2& h) { return in_ring(h, p); });
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (a + t * ab - p).norm();
}

inline double distance_to_block_boundary(const Block& b, const Vec2& p) {
    double best = INFINITY;
    auto ring = [&](const Polygon2& r) {
        for (std::size_t i = 0; i < r.size(); ++i) best = std::min(best, point_segment_distance(p, r[i], r[(i + 1) % r.size()]));
    };
    ring(b.outer);
    for (const auto& h : b.holes) ring(h);
    return best;
}

inline bool proper_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
    };
    const double o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
    return ((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0));
}

/// Closed containment of a convex quad in a block: corners inside, no block edge
/// crossing a quad edge, no block vertex strictly inside the quad.
inline bool quad_inside_block(const Polygon2& quad, const Block& b) {
    for (const auto& c : quad)
        if (!in_block(b, c) && distance_to_block_boundary(b, c) > 1e-9) return false;
    auto check_ring = [&](const Polygon2& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            const Vec2 &p = r[i], &q = r[(i + 1) % r.size()];
            if (in_ring(quad, p) && distance_to_block_boundary({quad, {}}, p) > 1e-9) return false;
            for (std::size_t k = 0; k < quad.size(); ++k)
                if (proper_cross(p, q, quad[k], quad[(k + 1) % quad.size()])) return false;
        }
        return true;
    };
    if (!check_ring(b.outer)) return false;
    for (const auto& h : b.holes)
        if (!check_ring(h)) return false;
    return true;
}

/// Separating-axis distance between two convex polygons (0 when they overlap).
inline double convex_distance(const Polygon2& a, const Polygon2& b) {
    auto separated = [](const Polygon2& p, const Polygon2& q) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const Vec2 e = p[(i + 1) % p.size()] - p[i];
            const Vec2 n(e.y(), -e.x());
            double pmin = INFINITY, pmax = -INFINITY, qmin = INFINITY, qmax = -INFINITY;
            for (const auto& v : p) pmin = std::min(pmin, v.dot(n)), pmax = std::max(pmax, v.dot(n));
            for (const auto& v : q) qmin = std::min(qmin, v.dot(n)), qmax = std::max(qmax, v.dot(n));
            if (pmax <= qmin || qmax <= pmin) return true;
        }
        return false;
    };
    if (!separated(a, b) && !separated(b, a)) return 0.0;
    double best = INFINITY;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (const auto& v : b) best = std::min(best, point_segment_distance(v, a[i], a[(i + 1) % a.size()]));
    for (std::size_t i = 0; i < b.size(); ++i)
        for (const auto& v : a) best = std::min(best, point_segment_distance(v, b[i], b[(i + 1) % b.size()]));
    return best;
}

struct CityFixture {
    std::string name;
    CityInput input;
};

inline Polygon2 rotated(Polygon2 p, double deg, const Vec2& about) {
    const double c = std::cos(deg * std::numbers::pi / 180.0), s = std::sin(deg * std::numbers::pi / 180.0);
    for (auto& v : p) {
        const Vec2 d = v - about;
        v = about + Vec2(c * d.x() - s * d.y(), s * d.x() + c * d.y());
    }
    return p;
}

inline std::vector<CityFixture> city_fixtures() {
    std::vector<CityFixture> f;
    f.push_back({"square_cross",
                 {{{0, 0}, {200, 0}, {200, 200}, {0, 200}},
                  {{{-10, 100}, {210, 100}, 10}, {{100, -10}, {100, 210}, 10}}}});
    f.push_back({"long_strip", {{{0, 0}, {320, 0}, {320, 150}, {0, 150}}, {{{160, -5}, {160, 155}, 12}}}});
    Polygon2 hex;
    for (int k = 0; k < 6; ++k) {
        const double t = k * std::numbers::pi / 3.0;
        hex.emplace_back(150 + 150 * std::cos(t), 150 + 150 * std::sin(t));
    }
    f.push_back({"hexagon_three_roads",
                 {hex, {{{-10, 150}, {310, 150}, 10}, {{60, -20}, {240, 320}, 8}, {{240, -20}, {60, 320}, 8}}}});
    f.push_back({"l_shape",
                 {{{0, 0}, {240, 0}, {240, 100}, {110, 100}, {110, 240}, {0, 240}},
                  {{{-5, 50}, {245, 50}, 10}, {{55, -5}, {55, 245}, 10}}}});
    const Vec2 c(100, 100);
    const Polygon2 sq = rotated({{10, 10}, {190, 10}, {190, 190}, {10, 190}}, 30.0, c);
    const auto ra = rotated({{-20, 100}, {220, 100}}, 30.0, c);
    const auto rb = rotated({{70, -20}, {70, 220}}, 30.0, c);
    f.push_back({"rotated_square", {sq, {{ra[0], ra[1], 9}, {rb[0], rb[1], 7}, {{0, 40}, {200, 140}, 6}}}});
    return f;
}

struct CityAudit {
    double area_rel_error = 0.0;
    std::size_t placements = 0;
    std::size_t containment_failures = 0;
    std::size_t overlap_failures = 0;
    std::size_t road_overlaps = 0;
    double max_dot = 0.0;
    std::size_t endpoint_failures = 0;
};

/// Audits every geometric invariant of a layout against the oracles above.
inline CityAudit audit_layout(const CityLayout& l, const CityConfig& cfg) {
    CityAudit a;
    double blocks = 0.0;
    for (const auto& b : l.blocks) {
        double area = std::abs(shoelace(b.outer));
        for (const auto& h : b.holes) area -= std::abs(shoelace(h));
        blocks += area;
    }
    const double bnd = std::abs(shoelace(l.boundary));
    a.area_rel_error = std::abs(blocks + road_area_inside(l.boundary, l.primary_roads) - bnd) / bnd;

    double min_gap = INFINITY;
    for (const auto& p : cfg.profiles) min_gap = std::min(min_gap, p.setback);
    a.placements = l.placements.size();
    std::vector<Polygon2> quads;
    for (const auto& p : l.placements) quads.push_back(p.footprint.corners());
    for (std::size_t i = 0; i < quads.size(); ++i) {
        int inside = 0;
        for (const auto& b : l.blocks) inside += quad_inside_block(quads[i], b);
        if (inside != 1 || !quad_inside_block(quads[i], l.blocks[l.placements[i].block])) ++a.containment_failures;
        for (std::size_t j = i + 1; j < quads.size(); ++j)
            if (convex_distance(quads[i], quads[j]) < min_gap - 1e-9) ++a.overlap_failures;
        for (const auto& s : l.secondary_roads)
            if (convex_distance(quads[i], road_rect(s.a, s.b, s.width)) <= 0.0) ++a.road_overlaps;
    }
    for (const auto& s : l.secondary_roads) {
        const Road& r = l.primary_roads[s.primary];
        const Vec2 u = (s.b - s.a) / (s.b - s.a).norm();
        const Vec2 v = (r.b - r.a) / (r.b - r.a).norm();
        a.max_dot = std::max(a.max_dot, std::abs(u.dot(v)));
        const Block& blk = l.blocks[s.block];
        if (distance_to_block_boundary(blk, s.a) > 1e-6 || distance_to_block_boundary(blk, s.b) > 1e-6)
            ++a.endpoint_failures;
    }
    return a;
}

}  // namespace procsplat::test_support
