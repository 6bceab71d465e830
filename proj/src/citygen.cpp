#include "procsplat/citygen.hpp"

#include "procsplat/error.hpp"

// Overlay in plain doubles; the integer rescaling of older Boost releases costs ~1e-7 relative area.
#define BOOST_GEOMETRY_NO_ROBUSTNESS
#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace procsplat {

namespace bg = boost::geometry;
using BPoint = bg::model::d2::point_xy<double>;
using BPoly = bg::model::polygon<BPoint, false>;  // counter-clockwise, closed
using BMulti = bg::model::multi_polygon<BPoly>;

namespace {

constexpr double kOnLine = 1e-6;  // meters; how far a block edge may sit from a road edge
constexpr double kRayEps = 1e-6;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }
Vec2 perp(const Vec2& v) { return {-v.y(), v.x()}; }

void append_ring(const Polygon2& pts, BPoly::ring_type& ring) {
    for (const Vec2& p : pts) ring.emplace_back(p.x(), p.y());
    if (!pts.empty()) ring.emplace_back(pts.front().x(), pts.front().y());
}

BPoly to_boost(const Polygon2& outer, const std::vector<Polygon2>& holes = {}) {
    BPoly poly;
    append_ring(outer, poly.outer());
    for (const auto& h : holes) {
        poly.inners().emplace_back();
        append_ring(h, poly.inners().back());
    }
    bg::correct(poly);
    return poly;
}

Polygon2 from_ring(const BPoly::ring_type& ring) {
    Polygon2 out;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) out.emplace_back(ring[i].x(), ring[i].y());
    return out;
}

Block from_boost(const BPoly& poly) {
    Block b;
    b.outer = from_ring(poly.outer());
    for (const auto& h : poly.inners()) b.holes.push_back(from_ring(h));
    return b;
}

template <typename F>
void for_each_edge(const Polygon2& ring, F&& f) {
    for (std::size_t i = 0; i < ring.size(); ++i) f(ring[i], ring[(i + 1) % ring.size()]);
}

template <typename F>
void for_each_edge(const Block& b, F&& f) {
    for_each_edge(b.outer, f);
    for (const auto& h : b.holes) for_each_edge(h, f);
}

bool point_in_ring(const Polygon2& ring, const Vec2& p) {
    bool inside = false;
    for_each_edge(ring, [&](const Vec2& a, const Vec2& b) {
        if ((a.y() > p.y()) != (b.y() > p.y())) {
            const double x = a.x() + (p.y() - a.y()) / (b.y() - a.y()) * (b.x() - a.x());
            if (p.x() < x) inside = !inside;
        }
    });
    return inside;
}

void check_road(const Road& r, std::size_t i) {
    if (!r.a.allFinite() || !r.b.allFinite() || !std::isfinite(r.width))
        throw GeometryError("primary road " + std::to_string(i) + ": non-finite coordinates");
    if (!(r.width > 0.0)) throw GeometryError("primary road " + std::to_string(i) + ": width must be positive");
    if ((r.b - r.a).norm() <= 0.0) throw GeometryError("primary road " + std::to_string(i) + ": zero length");
}

/// A parcel expressed in a road-aligned frame (u along the axis, v along its left normal).
struct LocalParcel {
    std::vector<Polygon2> rings;
    Vec2 lo, hi;

    // Liang-Barsky against the open rectangle: true if the segment enters its interior.
    static bool enters(const Vec2& p, const Vec2& q, const Vec2& lo, const Vec2& hi) {
        double t0 = 0.0, t1 = 1.0;
        const Vec2 d = q - p;
        const double ps[4] = {-d.x(), d.x(), -d.y(), d.y()};
        const double qs[4] = {p.x() - lo.x(), hi.x() - p.x(), p.y() - lo.y(), hi.y() - p.y()};
        for (int k = 0; k < 4; ++k) {
            if (ps[k] == 0.0) {
                if (qs[k] <= 0.0) return false;
                continue;
            }
            const double t = qs[k] / ps[k];
            if (ps[k] < 0.0) t0 = std::max(t0, t);
            else t1 = std::min(t1, t);
            if (t0 >= t1) return false;
        }
        return true;
    }

    bool covers(const Vec2& rlo, const Vec2& rhi) const {
        constexpr double eps = 1e-9;
        const Vec2 a = rlo + Vec2::Constant(eps), b = rhi - Vec2::Constant(eps);
        for (const auto& ring : rings)
            for (std::size_t i = 0; i < ring.size(); ++i)
                if (enters(ring[i], ring[(i + 1) % ring.size()], a, b)) return false;
        const Vec2 c = 0.5 * (rlo + rhi);
        bool inside = point_in_ring(rings[0], c);
        for (std::size_t h = 1; h < rings.size() && inside; ++h) inside = !point_in_ring(rings[h], c);
        return inside;
    }
};

double uniform(Rng& rng, const Vec2& range) {
    if (range.x() == range.y()) return range.x();
    return std::uniform_real_distribution<double>(range.x(), range.y())(rng);
}

// Seeds stored in layouts stay below 2^53 so they survive a round trip through JavaScript.
std::uint64_t draw_seed(Rng& rng) { return rng() >> 11; }

Mat3 yaw_matrix(const Vec2& axis) {
    Mat3 r;
    r << axis.x(), -axis.y(), 0.0, axis.y(), axis.x(), 0.0, 0.0, 0.0, 1.0;
    return r;
}

// outer ∘ inner for an outer transform with unit scale.
InstanceTransform compose(const InstanceTransform& outer, const InstanceTransform& inner) {
    InstanceTransform t;
    t.R = outer.R * inner.R;
    t.T = outer.R * inner.T + outer.T;
    t.S = inner.S;
    return t;
}

}  // namespace

Polygon2 Footprint::corners() const {
    const Vec2 n = normal();
    return {origin, origin + width * axis, origin + width * axis + depth * n, origin + depth * n};
}

void RegionProfile::validate() const {
    auto range = [&](const Vec2& r, const char* what) {
        if (!r.allFinite() || !(r.x() > 0.0) || r.x() > r.y())
            throw ConfigError("profile " + name + ": " + what + " must be a positive [min, max] range");
    };
    range(width_range, "width_range");
    range(depth_range, "depth_range");
    range(height_range, "height_range");
    if (!(density >= 0.0 && density <= 1.0)) throw ConfigError("profile " + name + ": density must be in [0, 1]");
    if (!(setback > 0.0)) throw ConfigError("profile " + name + ": setback must be positive");
    if (!(spacing >= setback)) throw ConfigError("profile " + name + ": spacing must be at least the setback");
}

std::vector<RegionProfile> CityConfig::default_profiles() {
    return {{"downtown", {14.0, 24.0}, {12.0, 20.0}, {24.0, 48.0}, 0.9, 2.0, 3.0},
            {"residential", {8.0, 14.0}, {8.0, 12.0}, {6.0, 12.0}, 0.75, 3.0, 4.0},
            {"industrial", {20.0, 36.0}, {16.0, 28.0}, {8.0, 14.0}, 0.6, 4.0, 6.0}};
}

void CityConfig::validate() const {
    if (!(secondary_interval > 0.0)) throw ConfigError("city config: secondary_interval must be positive");
    if (!(secondary_width > 0.0)) throw ConfigError("city config: secondary_width must be positive");
    if (profiles.empty()) throw ConfigError("city config: at least one region profile is required");
    for (const auto& p : profiles) p.validate();
    if (!(decoration_spacing > 0.0)) throw ConfigError("city config: decoration_spacing must be positive");
    if (!(decoration_offset >= 0.0)) throw ConfigError("city config: decoration_offset must be nonnegative");
    if (!(scan_step > 0.0)) throw ConfigError("city config: scan_step must be positive");
}

namespace {

Json range_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }

Vec2 vec2_from_json(const Json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError(what + " must be a pair of numbers");
    return {j[0].get<double>(), j[1].get<double>()};
}

Json vec2_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }

Json polygon_json(const Polygon2& p) {
    Json arr = Json::array();
    for (const auto& v : p) arr.push_back(vec2_json(v));
    return arr;
}

Polygon2 polygon_from_json(const Json& j, const std::string& what) {
    if (!j.is_array()) throw ConfigError(what + " must be an array of [x, y] points");
    Polygon2 out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(vec2_from_json(j[i], what + "[" + std::to_string(i) + "]"));
    return out;
}

const Json& need(const Json& j, const char* key, const std::string& what) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(what + ": missing '" + key + "'");
    return j.at(key);
}

double number(const Json& j, const char* key, const std::string& what) {
    const Json& v = need(j, key, what);
    if (!v.is_number()) throw ConfigError(what + ": '" + key + "' must be a number");
    return v.get<double>();
}

RegionProfile profile_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("region profile must be an object");
    RegionProfile p;
    if (j.contains("name")) p.name = j.at("name").get<std::string>();
    const std::string what = "profile " + p.name;
    if (j.contains("width_range")) p.width_range = vec2_from_json(j.at("width_range"), what + " width_range");
    if (j.contains("depth_range")) p.depth_range = vec2_from_json(j.at("depth_range"), what + " depth_range");
    if (j.contains("height_range")) p.height_range = vec2_from_json(j.at("height_range"), what + " height_range");
    if (j.contains("density")) p.density = number(j, "density", what);
    if (j.contains("setback")) p.setback = number(j, "setback", what);
    if (j.contains("spacing")) p.spacing = number(j, "spacing", what);
    return p;
}

}  // namespace

Json city_config_to_json(const CityConfig& c) {
    Json profiles = Json::array();
    for (const auto& p : c.profiles)
        profiles.push_back({{"name", p.name},
                            {"width_range", range_json(p.width_range)},
                            {"depth_range", range_json(p.depth_range)},
                            {"height_range", range_json(p.height_range)},
                            {"density", p.density},
                            {"setback", p.setback},
                            {"spacing", p.spacing}});
    return {{"secondary_interval", c.secondary_interval},
            {"secondary_width", c.secondary_width},
            {"profiles", profiles},
            {"decoration_kinds", c.decoration_kinds},
            {"decoration_spacing", c.decoration_spacing},
            {"decoration_offset", c.decoration_offset},
            {"scan_step", c.scan_step},
            {"use_variance", c.use_variance}};
}

CityConfig city_config_from_json(const Json& j, CityConfig c) {
    if (!j.is_object()) throw ConfigError("city config must be a JSON object");
    static const std::set<std::string> known = {"secondary_interval", "secondary_width", "profiles",
                                                "decoration_kinds",   "decoration_spacing", "decoration_offset",
                                                "scan_step",          "use_variance"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown city config key '" + key + "'");
    try {
        auto get = [&](const char* key, auto& dst) {
            if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
        };
        get("secondary_interval", c.secondary_interval);
        get("secondary_width", c.secondary_width);
        get("decoration_kinds", c.decoration_kinds);
        get("decoration_spacing", c.decoration_spacing);
        get("decoration_offset", c.decoration_offset);
        get("scan_step", c.scan_step);
        get("use_variance", c.use_variance);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("city config: ") + e.what());
    }
    if (j.contains("profiles")) {
        if (!j.at("profiles").is_array()) throw ConfigError("city config: profiles must be an array");
        c.profiles.clear();
        for (const auto& p : j.at("profiles")) c.profiles.push_back(profile_from_json(p));
    }
    c.validate();
    return c;
}

double polygon_area(const Polygon2& poly) {
    double a = 0.0;
    for_each_edge(poly, [&](const Vec2& p, const Vec2& q) { a += cross(p, q); });
    return 0.5 * a;
}

double block_area(const Block& block) {
    double a = std::abs(polygon_area(block.outer));
    for (const auto& h : block.holes) a -= std::abs(polygon_area(h));
    return a;
}

Polygon2 validate_boundary(const Polygon2& poly) {
    if (poly.size() < 3) throw GeometryError("boundary needs at least three vertices");
    for (const auto& p : poly)
        if (!p.allFinite()) throw GeometryError("boundary has non-finite coordinates");
    Polygon2 out = poly;
    const double area = polygon_area(out);
    if (!(std::abs(area) > 0.0)) throw GeometryError("boundary has zero area");
    if (area < 0.0) std::reverse(out.begin(), out.end());
    std::string why;
    if (!bg::is_valid(to_boost(out), why)) throw GeometryError("boundary is not a simple polygon: " + why);
    return out;
}

Polygon2 road_polygon(const Vec2& a, const Vec2& b, double width) {
    const Vec2 d = (b - a).normalized();
    const Vec2 n = 0.5 * width * perp(d);
    return {a - n, b - n, b + n, a + n};
}

std::vector<Block> partition_blocks(const Polygon2& boundary_in, const std::vector<Road>& roads) {
    const Polygon2 boundary = validate_boundary(boundary_in);
    const BPoly bnd = to_boost(boundary);
    BMulti road_union;
    for (std::size_t i = 0; i < roads.size(); ++i) {
        check_road(roads[i], i);
        const BPoly r = to_boost(road_polygon(roads[i].a, roads[i].b, roads[i].width));
        if (!bg::intersects(r, bnd))
            throw GeometryError("primary road " + std::to_string(i) + " does not reach the boundary interior");
        BMulti merged;
        bg::union_(road_union, r, merged);
        road_union = std::move(merged);
    }
    BMulti pieces;
    bg::difference(bnd, road_union, pieces);

    const double floor_area = 1e-12 * std::abs(polygon_area(boundary));
    std::vector<Block> blocks;
    for (const auto& p : pieces)
        if (bg::area(p) > floor_area) blocks.push_back(from_boost(p));
    // Stable reading order: by lowest vertex, then leftmost.
    auto key = [](const Block& b) {
        Vec2 lo = b.outer.front();
        for (const auto& v : b.outer)
            if (v.y() < lo.y() || (v.y() == lo.y() && v.x() < lo.x())) lo = v;
        return std::pair{lo.y(), lo.x()};
    };
    std::stable_sort(blocks.begin(), blocks.end(), [&](const Block& a, const Block& b) { return key(a) < key(b); });
    return blocks;
}

Frontage block_frontage(const Block& block, const std::vector<Road>& roads) {
    struct Span {
        double t0, t1;
    };
    Frontage best;
    for (std::size_t r = 0; r < roads.size(); ++r) {
        const Vec2 d = (roads[r].b - roads[r].a).normalized();
        const Vec2 n = perp(d);
        const double len = (roads[r].b - roads[r].a).norm();
        for (int side : {1, -1}) {
            const Vec2 c = roads[r].a + side * 0.5 * roads[r].width * n;
            std::vector<Span> spans;
            for_each_edge(block.outer, [&](const Vec2& p, const Vec2& q) {
                if (std::abs((p - c).dot(n)) > kOnLine || std::abs((q - c).dot(n)) > kOnLine) return;
                const double tp = (p - c).dot(d), tq = (q - c).dot(d);
                if (std::min(tp, tq) < -kOnLine || std::max(tp, tq) > len + kOnLine) return;
                if (std::abs(tp - tq) > 0.0) spans.push_back({std::min(tp, tq), std::max(tp, tq)});
            });
            std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.t0 < b.t0; });
            for (std::size_t i = 0; i < spans.size();) {
                Span cur = spans[i++];
                while (i < spans.size() && spans[i].t0 <= cur.t1 + kOnLine) cur.t1 = std::max(cur.t1, spans[i++].t1);
                const double length = cur.t1 - cur.t0;
                if (length > best.length) {
                    best.road = static_cast<int>(r);
                    best.length = length;
                    // The block lies on the `side` of the road; its interior must be to the left.
                    best.axis = side > 0 ? d : Vec2(-d);
                    best.start = c + (side > 0 ? cur.t0 : cur.t1) * d;
                }
            }
        }
    }
    if (best.road >= 0) return best;
    for_each_edge(block.outer, [&](const Vec2& p, const Vec2& q) {
        if ((q - p).norm() > best.length) {
            best.length = (q - p).norm();
            best.axis = (q - p) / best.length;
            best.start = p;
        }
    });
    return best;
}

namespace {

// Distance along `dir` from `p` to the first block edge, or a negative value.
double first_hit(const Block& block, const Vec2& p, const Vec2& dir) {
    double best = std::numeric_limits<double>::infinity();
    for_each_edge(block, [&](const Vec2& a, const Vec2& b) {
        const Vec2 e = b - a;
        const double denom = cross(dir, e);
        if (std::abs(denom) <= 1e-15 * e.norm()) return;
        const double t = cross(a - p, e) / denom;
        const double u = cross(a - p, dir) / denom;
        if (t > kRayEps && u >= -1e-12 && u <= 1.0 + 1e-12) best = std::min(best, t);
    });
    return std::isfinite(best) ? best : -1.0;
}

}  // namespace

std::vector<SecondaryRoad> generate_secondary_roads(const std::vector<Block>& blocks,
                                                    const std::vector<Road>& roads,
                                                    const CityConfig& config) {
    std::vector<SecondaryRoad> out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const Frontage f = block_frontage(blocks[i], roads);
        if (f.road < 0 || f.length < config.secondary_interval) continue;
        const int n = static_cast<int>(std::floor(f.length / config.secondary_interval + 1e-9));
        const Vec2 inward = perp(f.axis);
        for (int k = 0; k < n; ++k) {
            const double s = 0.5 * f.length + (k - 0.5 * (n - 1)) * config.secondary_interval;
            const Vec2 a = f.start + s * f.axis;
            const double t = first_hit(blocks[i], a, inward);
            if (t <= 0.0) continue;
            out.push_back({a, a + t * inward, config.secondary_width, f.road, static_cast<int>(i)});
        }
    }
    return out;
}

std::vector<Placement> place_buildings(const Block& block, const Vec2& axis_in,
                                       const std::vector<SecondaryRoad>& cuts,
                                       const RegionProfile& profile, double scan_step,
                                       std::uint64_t seed) {
    profile.validate();
    if (!(scan_step > 0.0)) throw ConfigError("place_buildings: scan_step must be positive");
    if (block.outer.size() < 3 || !(block_area(block) > 0.0)) return {};
    const Vec2 axis = axis_in.normalized();
    const Vec2 nrm = perp(axis);

    BMulti parcels;
    {
        BMulti cut_union;
        for (const auto& c : cuts) {
            BMulti merged;
            bg::union_(cut_union, to_boost(road_polygon(c.a, c.b, c.width)), merged);
            cut_union = std::move(merged);
        }
        bg::difference(to_boost(block.outer, block.holes), cut_union, parcels);
    }

    Rng rng(seed);
    std::bernoulli_distribution build(profile.density);
    const double sb = profile.setback;
    std::vector<Placement> out;
    for (const auto& parcel : parcels) {
        LocalParcel lp;
        auto local = [&](const BPoly::ring_type& ring) {
            Polygon2 pts;
            for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
                const Vec2 p(ring[i].x(), ring[i].y());
                pts.emplace_back(p.dot(axis), p.dot(nrm));
            }
            return pts;
        };
        lp.rings.push_back(local(parcel.outer()));
        for (const auto& h : parcel.inners()) lp.rings.push_back(local(h));
        lp.lo = lp.hi = lp.rings[0].front();
        for (const auto& v : lp.rings[0]) {
            lp.lo = lp.lo.cwiseMin(v);
            lp.hi = lp.hi.cwiseMax(v);
        }

        struct Rect {
            Vec2 lo, hi;
        };
        auto fits = [&](const Rect& r, double du) {
            return lp.covers(r.lo + Vec2(du - sb, -sb), r.hi + Vec2(du + sb, sb));
        };
        for (double v = lp.lo.y() + sb; v + profile.depth_range.x() + sb <= lp.hi.y();) {
            const double depth = std::min(uniform(rng, profile.depth_range), lp.hi.y() - sb - v);
            std::vector<Rect> row;
            for (double u = lp.lo.x() + sb; u + profile.width_range.x() + sb <= lp.hi.x();) {
                const double w = uniform(rng, profile.width_range);
                const Rect r{{u, v}, {u + w, v + depth}};
                if (!fits(r, 0.0)) {
                    u += scan_step;
                    continue;
                }
                if (build(rng)) row.push_back(r);
                u += w + profile.spacing;
            }
            if (!row.empty()) {
                // Center the row: find how far the last rectangle can slide, move all by half.
                double lo = 0.0, hi = lp.hi.x() - sb - row.back().hi.x();
                if (hi > 0.0 && !fits(row.back(), hi)) {
                    for (int it = 0; it < 48; ++it) {
                        const double mid = 0.5 * (lo + hi);
                        (fits(row.back(), mid) ? lo : hi) = mid;
                    }
                } else {
                    lo = std::max(hi, 0.0);
                }
                const double shift = 0.5 * lo;
                if (shift > 0.0 && std::all_of(row.begin(), row.end(), [&](const Rect& r) { return fits(r, shift); }))
                    for (auto& r : row) r.lo.x() += shift, r.hi.x() += shift;
                for (const auto& r : row) {
                    Placement p;
                    p.footprint.origin = r.lo.x() * axis + r.lo.y() * nrm;
                    p.footprint.axis = axis;
                    p.footprint.width = r.hi.x() - r.lo.x();
                    p.footprint.depth = r.hi.y() - r.lo.y();
                    p.height = uniform(rng, profile.height_range);
                    p.seed = draw_seed(rng);
                    out.push_back(std::move(p));
                }
            }
            v += depth + profile.spacing;
        }
    }
    return out;
}

std::vector<double> poisson_offsets(double length, double mean_gap, Rng& rng) {
    if (!(mean_gap > 0.0)) throw InvalidParameter("poisson_offsets: mean gap must be positive");
    std::exponential_distribution<double> gap(1.0 / mean_gap);
    std::vector<double> out;
    for (double t = gap(rng); t < length; t += gap(rng)) out.push_back(t);
    return out;
}

std::vector<Decoration> place_decorations(const CityLayout& layout, const CityConfig& config,
                                          std::uint64_t seed) {
    if (config.decoration_kinds.empty()) return {};
    std::vector<Polygon2> roads;
    std::vector<Road> edges;
    for (const auto& r : layout.primary_roads) edges.push_back(r);
    for (const auto& r : layout.secondary_roads) edges.push_back({r.a, r.b, r.width});
    for (const auto& r : edges) roads.push_back(road_polygon(r.a, r.b, r.width));
    std::vector<Polygon2> footprints;
    for (const auto& p : layout.placements) footprints.push_back(p.footprint.corners());

    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, config.decoration_kinds.size() - 1);
    auto inside_any = [](const std::vector<Polygon2>& polys, const Vec2& p) {
        return std::any_of(polys.begin(), polys.end(), [&](const Polygon2& q) { return point_in_ring(q, p); });
    };
    // Footprints are closed: a lamp on a wall line is still inside.
    auto touches_footprint = [&](const Vec2& p) {
        for (const auto& fp : layout.placements) {
            const Vec2 d = p - fp.footprint.origin;
            const double u = d.dot(fp.footprint.axis), v = d.dot(fp.footprint.normal());
            if (u >= -1e-9 && u <= fp.footprint.width + 1e-9 && v >= -1e-9 && v <= fp.footprint.depth + 1e-9)
                return true;
        }
        return false;
    };

    std::vector<Decoration> out;
    for (const auto& r : edges) {
        const Vec2 d = (r.b - r.a).normalized();
        const Vec2 n = perp(d);
        const double len = (r.b - r.a).norm();
        for (int side : {1, -1}) {
            const Vec2 start = r.a + side * (0.5 * r.width + config.decoration_offset) * n;
            for (double t : poisson_offsets(len, config.decoration_spacing, rng)) {
                const Vec2 p = start + t * d;
                const std::string& kind = config.decoration_kinds[pick(rng)];
                if (!point_in_ring(layout.boundary, p) || inside_any(roads, p) || touches_footprint(p)) continue;
                const Vec2 facing = -side * n;
                out.push_back({kind, p, std::atan2(facing.y(), facing.x())});
            }
        }
    }
    return out;
}

std::vector<AssetSpec> AssetLibrary::manifest() const {
    std::vector<AssetSpec> m;
    for (const auto& b : bases) m.push_back(b.spec);
    return m;
}

const ProceduralCode& AssetLibrary::code(const std::string& building_id) const {
    for (const auto& c : codes)
        if (c.building_id == building_id) return c;
    throw ResolveError("no building code named '" + building_id + "' in the library");
}

void AssetLibrary::add_variance(const std::vector<Gaussian3D>& gaussians, const std::string& owner) {
    if (std::none_of(bases.begin(), bases.end(), [&](const BaseAsset& b) { return b.spec.id == owner; }))
        throw ResolveError("variance asset references unknown base '" + owner + "'");
    auto& pool = pools[owner];
    pool.push_back({owner, static_cast<int>(pool.size()), gaussians});
}

AssetLibrary AssetLibrary::from_checkpoint(const Checkpoint& ckpt) {
    AssetLibrary lib;
    lib.sh_degree = ckpt.sh_degree;
    lib.merge(ckpt);
    return lib;
}

void AssetLibrary::merge(const Checkpoint& ckpt) {
    if (ckpt.sh_degree != sh_degree)
        throw ConfigError("library merge: SH degree " + std::to_string(ckpt.sh_degree) + " does not match " +
                          std::to_string(sh_degree));
    for (const auto& b : ckpt.bases)
        if (std::none_of(bases.begin(), bases.end(), [&](const BaseAsset& x) { return x.spec.id == b.spec.id; }))
            bases.push_back(b);
    for (const auto& v : ckpt.variances) add_variance(v.gaussians, v.owner_asset_id);
    if (!ckpt.code_text.empty())
        for (auto& c : parse_all(ckpt.code_text)) {
            if (std::any_of(codes.begin(), codes.end(), [&](const ProceduralCode& x) { return x.building_id == c.building_id; }))
                throw ConfigError("library merge: building code '" + c.building_id + "' defined twice");
            codes.push_back(std::move(c));
        }
}

BuildingResult generate_building(const ProceduralCode& code, const Vec3& dims, const AssetLibrary& library,
                                 std::uint64_t seed, bool use_variance) {
    BuildingResult out;
    out.instantiations = expand(code, library.manifest(), dims);
    Rng rng(seed);
    std::set<std::pair<std::string, int>> used;
    for (auto& inst : out.instantiations) {
        const auto pool = library.pools.find(inst.asset_id);
        if (!use_variance || pool == library.pools.end() || pool->second.empty()) {
            inst.variance_index.reset();
            continue;
        }
        std::uniform_int_distribution<int> pick(0, static_cast<int>(pool->second.size()) - 1);
        inst.variance_index = pick(rng);
        used.emplace(inst.asset_id, *inst.variance_index);
    }
    for (const auto& [owner, j] : used) out.variances.push_back(library.pools.at(owner)[j]);
    out.scene = assemble(out.instantiations, library.bases, out.variances);
    return out;
}

InstanceTransform placement_transform(const Footprint& fp) {
    InstanceTransform t;
    t.R = yaw_matrix(fp.axis.normalized());
    t.T = Vec3(fp.origin.x(), fp.origin.y(), 0.0);
    return t;
}

CityLayout generate_layout(const CityInput& input, const CityConfig& config, std::uint64_t seed,
                           const AssetLibrary* library) {
    config.validate();
    CityLayout layout;
    layout.boundary = validate_boundary(input.boundary);
    layout.primary_roads = input.primary_roads;
    layout.blocks = partition_blocks(layout.boundary, layout.primary_roads);
    layout.secondary_roads = generate_secondary_roads(layout.blocks, layout.primary_roads, config);

    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick_profile(0, config.profiles.size() - 1);
    const std::vector<AssetSpec> manifest = library ? library->manifest() : std::vector<AssetSpec>{};
    for (std::size_t i = 0; i < layout.blocks.size(); ++i) {
        const std::size_t profile = pick_profile(rng);
        layout.block_profiles.push_back(static_cast<int>(profile));
        const std::uint64_t block_seed = rng();
        std::vector<SecondaryRoad> cuts;
        for (const auto& s : layout.secondary_roads)
            if (s.block == static_cast<int>(i)) cuts.push_back(s);
        const Vec2 axis = block_frontage(layout.blocks[i], layout.primary_roads).axis;
        for (auto& p : place_buildings(layout.blocks[i], axis, cuts, config.profiles[profile], config.scan_step,
                                       block_seed)) {
            p.block = static_cast<int>(i);
            if (library && !library->codes.empty()) {
                std::vector<std::size_t> order(library->codes.size());
                for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
                std::shuffle(order.begin(), order.end(), rng);
                const Vec3 dims(p.footprint.width, p.footprint.depth, p.height);
                for (std::size_t k : order) {
                    try {
                        expand(library->codes[k], manifest, dims);
                        p.code_ref = library->codes[k].building_id;
                        break;
                    } catch (const InfeasibleDimensions&) {
                    } catch (const AmbiguityError&) {
                    }
                }
                if (p.code_ref.empty()) continue;
            }
            layout.placements.push_back(std::move(p));
        }
    }
    layout.decorations = place_decorations(layout, config, draw_seed(rng));
    return layout;
}

CityResult assemble_city(const CityLayout& layout, const AssetLibrary& library, bool use_variance) {
    CityResult out;
    out.layout = layout;
    std::map<std::pair<std::string, int>, VarianceAsset> used;
    for (const auto& p : layout.placements) {
        if (p.code_ref.empty()) {
            out.building_sizes.push_back(0);
            continue;
        }
        const BuildingResult b = generate_building(library.code(p.code_ref),
                                                   Vec3(p.footprint.width, p.footprint.depth, p.height), library,
                                                   p.seed, use_variance);
        const InstanceTransform world = placement_transform(p.footprint);
        for (const auto& inst : b.instantiations)
            out.instantiations.push_back({inst.asset_id, compose(world, inst.transform), inst.variance_index});
        for (const auto& v : b.variances) used.emplace(std::pair{v.owner_asset_id, v.instance_index}, v);
        out.building_sizes.push_back(b.scene.size());
    }
    const auto manifest = library.manifest();
    for (const auto& d : layout.decorations) {
        if (std::none_of(manifest.begin(), manifest.end(), [&](const AssetSpec& s) { return s.id == d.kind; }))
            throw ResolveError("decoration kind '" + d.kind + "' is not an asset in the library");
        InstanceTransform t;
        t.R = yaw_matrix(Vec2(std::cos(d.yaw), std::sin(d.yaw)));
        t.T = Vec3(d.position.x(), d.position.y(), 0.0);
        out.instantiations.push_back({d.kind, t, std::nullopt});
    }
    for (auto& [_, v] : used) out.variances.push_back(std::move(v));
    out.scene = assemble(out.instantiations, library.bases, out.variances);
    return out;
}

CityResult generate_city(const CityInput& input, const AssetLibrary& library, const CityConfig& config,
                         std::uint64_t seed) {
    return assemble_city(generate_layout(input, config, seed, &library), library, config.use_variance);
}

Checkpoint CityResult::to_checkpoint(const AssetLibrary& library) const {
    Checkpoint c;
    c.sh_degree = library.sh_degree;
    c.bases = library.bases;
    c.variances = variances;
    c.instantiations = instantiations;
    std::set<std::string> refs;
    for (const auto& p : layout.placements)
        if (!p.code_ref.empty()) refs.insert(p.code_ref);
    std::vector<ProceduralCode> used;
    for (const auto& code : library.codes)
        if (refs.count(code.building_id)) used.push_back(code);
    if (!used.empty()) c.code_text = serialize(used);
    return c;
}

CityInput city_input_from_json(const Json& j) {
    CityInput in;
    in.boundary = polygon_from_json(need(j, "boundary", "layout"), "boundary");
    if (j.contains("primary_roads")) {
        const Json& roads = j.at("primary_roads");
        if (!roads.is_array()) throw ConfigError("layout: primary_roads must be an array");
        for (std::size_t i = 0; i < roads.size(); ++i) {
            const std::string what = "primary_roads[" + std::to_string(i) + "]";
            in.primary_roads.push_back({vec2_from_json(need(roads[i], "a", what), what + ".a"),
                                        vec2_from_json(need(roads[i], "b", what), what + ".b"),
                                        number(roads[i], "width", what)});
        }
    }
    return in;
}

Json city_input_to_json(const CityInput& in) {
    Json roads = Json::array();
    for (const auto& r : in.primary_roads)
        roads.push_back({{"a", vec2_json(r.a)}, {"b", vec2_json(r.b)}, {"width", r.width}});
    return {{"boundary", polygon_json(in.boundary)}, {"primary_roads", roads}};
}

Json city_layout_to_json(const CityLayout& layout) {
    Json j = city_input_to_json({layout.boundary, layout.primary_roads});
    Json blocks = Json::array();
    for (const auto& b : layout.blocks) {
        Json holes = Json::array();
        for (const auto& h : b.holes) holes.push_back(polygon_json(h));
        blocks.push_back({{"outer", polygon_json(b.outer)}, {"holes", holes}});
    }
    Json secondary = Json::array();
    for (const auto& s : layout.secondary_roads)
        secondary.push_back({{"a", vec2_json(s.a)},
                             {"b", vec2_json(s.b)},
                             {"width", s.width},
                             {"primary", s.primary},
                             {"block", s.block}});
    Json placements = Json::array();
    for (const auto& p : layout.placements)
        placements.push_back({{"footprint",
                               {{"origin", vec2_json(p.footprint.origin)},
                                {"axis", vec2_json(p.footprint.axis)},
                                {"width", p.footprint.width},
                                {"depth", p.footprint.depth},
                                {"corners", polygon_json(p.footprint.corners())}}},
                              {"height", p.height},
                              {"block", p.block},
                              {"code_ref", p.code_ref},
                              {"seed", p.seed}});
    Json decorations = Json::array();
    for (const auto& d : layout.decorations)
        decorations.push_back({{"kind", d.kind}, {"position", vec2_json(d.position)}, {"yaw", d.yaw}});
    j["blocks"] = blocks;
    j["block_profiles"] = layout.block_profiles;
    j["secondary_roads"] = secondary;
    j["placements"] = placements;
    j["decorations"] = decorations;
    return j;
}

CityLayout city_layout_from_json(const Json& j) {
    const CityInput in = city_input_from_json(j);
    CityLayout l;
    l.boundary = in.boundary;
    l.primary_roads = in.primary_roads;
    try {
        for (const auto& b : j.value("blocks", Json::array())) {
            Block blk;
            blk.outer = polygon_from_json(need(b, "outer", "block"), "block outer");
            for (const auto& h : b.value("holes", Json::array())) blk.holes.push_back(polygon_from_json(h, "block hole"));
            l.blocks.push_back(std::move(blk));
        }
        l.block_profiles = j.value("block_profiles", std::vector<int>{});
        for (const auto& s : j.value("secondary_roads", Json::array()))
            l.secondary_roads.push_back({vec2_from_json(need(s, "a", "secondary road"), "secondary road a"),
                                         vec2_from_json(need(s, "b", "secondary road"), "secondary road b"),
                                         number(s, "width", "secondary road"), s.value("primary", 0),
                                         s.value("block", 0)});
        for (const auto& p : j.value("placements", Json::array())) {
            Placement pl;
            const Json& f = need(p, "footprint", "placement");
            pl.footprint.origin = vec2_from_json(need(f, "origin", "footprint"), "footprint origin");
            pl.footprint.axis = vec2_from_json(need(f, "axis", "footprint"), "footprint axis");
            pl.footprint.width = number(f, "width", "footprint");
            pl.footprint.depth = number(f, "depth", "footprint");
            if (!(pl.footprint.width > 0.0 && pl.footprint.depth > 0.0) || !(pl.footprint.axis.norm() > 0.0))
                throw ConfigError("placement footprint must have positive size and a nonzero axis");
            pl.height = number(p, "height", "placement");
            pl.block = p.value("block", 0);
            pl.code_ref = p.value("code_ref", std::string{});
            pl.seed = p.value("seed", std::uint64_t{0});
            l.placements.push_back(std::move(pl));
        }
        for (const auto& d : j.value("decorations", Json::array()))
            l.decorations.push_back({need(d, "kind", "decoration").get<std::string>(),
                                     vec2_from_json(need(d, "position", "decoration"), "decoration position"),
                                     d.value("yaw", 0.0)});
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("layout: ") + e.what());
    }
    return l;
}

}  // namespace procsplat
