#pragma once

#include "procsplat/assembly.hpp"
#include "procsplat/grammar.hpp"
#include "procsplat/io.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace procsplat {

/// Ground-plane polygon in meters, counter-clockwise, first vertex not repeated.
using Polygon2 = std::vector<Vec2>;

struct Block {
    Polygon2 outer;
    std::vector<Polygon2> holes;  // clockwise
};

struct Road {
    Vec2 a = Vec2::Zero();
    Vec2 b = Vec2::Zero();
    double width = 0.0;
};

struct SecondaryRoad {
    Vec2 a = Vec2::Zero();  // on the primary road's edge
    Vec2 b = Vec2::Zero();  // on the far side of the block
    double width = 0.0;
    int primary = 0;
    int block = 0;
};

/// Rectangle spanned by `width` along `axis` and `depth` along its left normal.
struct Footprint {
    Vec2 origin = Vec2::Zero();
    Vec2 axis = Vec2::UnitX();
    double width = 0.0;
    double depth = 0.0;

    Vec2 normal() const { return {-axis.y(), axis.x()}; }
    Polygon2 corners() const;
};

struct Placement {
    Footprint footprint;
    double height = 0.0;
    int block = 0;
    std::string code_ref;  // empty when no building code was assigned
    std::uint64_t seed = 0;
};

struct Decoration {
    std::string kind;
    Vec2 position = Vec2::Zero();
    double yaw = 0.0;  // radians about +z
};

struct CityLayout {
    Polygon2 boundary;
    std::vector<Road> primary_roads;
    std::vector<Block> blocks;
    std::vector<int> block_profiles;  // index into CityConfig::profiles, per block
    std::vector<SecondaryRoad> secondary_roads;
    std::vector<Placement> placements;
    std::vector<Decoration> decorations;
};

/// Per-block building rules.
struct RegionProfile {
    std::string name;
    Vec2 width_range{10.0, 20.0};  // along the road
    Vec2 depth_range{10.0, 16.0};
    Vec2 height_range{8.0, 20.0};
    double density = 1.0;  // chance that a fitting slot is built on
    double setback = 2.0;  // clearance from block edges
    double spacing = 3.0;  // clearance between footprints, at least the setback

    void validate() const;
};

struct CityConfig {
    double secondary_interval = 60.0;
    double secondary_width = 6.0;
    std::vector<RegionProfile> profiles = default_profiles();
    std::vector<std::string> decoration_kinds;
    double decoration_spacing = 10.0;  // mean gap of the Poisson process, meters
    double decoration_offset = 1.0;    // distance from the road edge into the block
    double scan_step = 0.5;            // packing probe step along a strip
    bool use_variance = true;

    static std::vector<RegionProfile> default_profiles();
    void validate() const;
};

Json city_config_to_json(const CityConfig& c);
CityConfig city_config_from_json(const Json& j, CityConfig base = {});

/// Throws GeometryError unless `poly` is a simple polygon with positive area.
/// Clockwise input is accepted and reversed.
Polygon2 validate_boundary(const Polygon2& poly);

double polygon_area(const Polygon2& poly);  // signed, positive when counter-clockwise
double block_area(const Block& block);

/// Road center line inflated to its width, flat ends.
Polygon2 road_polygon(const Vec2& a, const Vec2& b, double width);

/// Boundary interior minus the union of the inflated primary roads.
std::vector<Block> partition_blocks(const Polygon2& boundary, const std::vector<Road>& roads);

struct Frontage {
    int road = -1;   // -1 when the block touches no primary road
    Vec2 start = Vec2::Zero();
    Vec2 axis = Vec2::UnitX();  // block interior lies to the left
    double length = 0.0;
};

/// Longest stretch of the block's outer boundary lying on a primary road edge, or
/// its longest edge when it touches no road.
Frontage block_frontage(const Block& block, const std::vector<Road>& roads);

/// Roads perpendicular to each block's frontage, floor(length / interval) of them,
/// `interval` apart and centered, each running to the first block edge it meets.
std::vector<SecondaryRoad> generate_secondary_roads(const std::vector<Block>& blocks,
                                                    const std::vector<Road>& roads,
                                                    const CityConfig& config);

/// Greedy strip packing of road-aligned rectangles into the block minus the cuts.
std::vector<Placement> place_buildings(const Block& block, const Vec2& axis,
                                       const std::vector<SecondaryRoad>& cuts,
                                       const RegionProfile& profile, double scan_step,
                                       std::uint64_t seed);

/// Offsets along a road edge of `length` meters drawn from a Poisson process.
std::vector<double> poisson_offsets(double length, double mean_gap, Rng& rng);

std::vector<Decoration> place_decorations(const CityLayout& layout, const CityConfig& config,
                                          std::uint64_t seed);

struct CityInput {
    Polygon2 boundary;
    std::vector<Road> primary_roads;
};

/// Base assets, variance pools and building codes available for generation.
struct AssetLibrary {
    int sh_degree = kDefaultShDegree;
    std::vector<BaseAsset> bases;
    /// Per base asset id; VarianceAsset::instance_index is the position in the pool.
    std::map<std::string, std::vector<VarianceAsset>> pools;
    std::vector<ProceduralCode> codes;

    std::vector<AssetSpec> manifest() const;
    const ProceduralCode& code(const std::string& building_id) const;
    /// Appends a variance set to its owner's pool. Throws ResolveError for an unknown owner.
    void add_variance(const std::vector<Gaussian3D>& gaussians, const std::string& owner);

    /// Bases, variances and codes of a fitted checkpoint. Further checkpoints can be
    /// merged with `merge`; their variances join the pools of equally named bases.
    static AssetLibrary from_checkpoint(const Checkpoint& ckpt);
    void merge(const Checkpoint& ckpt);
};

struct BuildingResult {
    InstantiationList instantiations;
    std::vector<VarianceAsset> variances;  // the pool entries referenced, once each
    Scene scene;
};

/// expand, then a seeded uniform draw from each instance's variance pool, then assemble.
BuildingResult generate_building(const ProceduralCode& code, const Vec3& dims,
                                 const AssetLibrary& library, std::uint64_t seed,
                                 bool use_variance = true);

/// Layout only: blocks, secondary roads, placements and decorations. When `library`
/// is given, each placement gets a building code that fits its footprint; placements
/// no code fits are dropped.
CityLayout generate_layout(const CityInput& input, const CityConfig& config, std::uint64_t seed,
                           const AssetLibrary* library = nullptr);

struct CityResult {
    CityLayout layout;
    InstantiationList instantiations;
    std::vector<VarianceAsset> variances;
    std::vector<std::size_t> building_sizes;  // Gaussians per placement
    Scene scene;

    Checkpoint to_checkpoint(const AssetLibrary& library) const;
};

/// Builds every placement of a finished layout and adds the decorations.
CityResult assemble_city(const CityLayout& layout, const AssetLibrary& library,
                         bool use_variance = true);

CityResult generate_city(const CityInput& input, const AssetLibrary& library,
                         const CityConfig& config, std::uint64_t seed);

/// World transform of a building whose local frame spans [0, width] x [0, depth].
InstanceTransform placement_transform(const Footprint& fp);

CityInput city_input_from_json(const Json& j);
Json city_input_to_json(const CityInput& in);
Json city_layout_to_json(const CityLayout& layout);
CityLayout city_layout_from_json(const Json& j);

}  // namespace procsplat
