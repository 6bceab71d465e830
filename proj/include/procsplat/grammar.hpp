#pragma once

#include "procsplat/math.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace procsplat {

/// Bounding box of a reusable asset in its own frame. The box is pivot +/- extent/2;
/// x runs along the facade, y points into the building and z is up.
struct AssetSpec {
    std::string id;
    Vec3 extent = Vec3::Ones();
    Vec3 pivot = Vec3::Zero();

    Vec3 box_min() const { return pivot - 0.5 * extent; }
    Vec3 box_max() const { return pivot + 0.5 * extent; }
    double volume() const { return extent.prod(); }

    bool operator==(const AssetSpec&) const = default;
};

/// world = R * (S .* local) + T
struct InstanceTransform {
    Mat3 R = Mat3::Identity();
    Vec3 T = Vec3::Zero();
    Vec3 S = Vec3::Ones();

    Vec3 apply(const Vec3& local) const { return R * S.cwiseProduct(local) + T; }
    Vec3 inverse_apply(const Vec3& world) const {
        return (R.transpose() * (world - T)).cwiseQuotient(S);
    }
    /// Affine 4x4 equivalent.
    Mat4 matrix() const;
    /// Throws InvalidParameter unless R is a proper rotation and S > 0.
    void validate() const;

    bool operator==(const InstanceTransform&) const = default;
};

struct Instantiation {
    std::string asset_id;
    InstanceTransform transform;
    /// Which variance asset of `asset_id` rides along with this placement, if any.
    std::optional<int> variance_index;

    bool operator==(const Instantiation&) const = default;
};

using InstantiationList = std::vector<Instantiation>;

/// 1-based source position of an AST node.
struct Span {
    int line = 0;
    int column = 0;
};

struct Item;

struct Token {
    std::string asset_id;
    bool scalable = false;
    bool operator==(const Token&) const = default;
};

struct Group {
    std::vector<Item> items;
    bool repeatable = false;
};

struct Item {
    std::variant<Token, Group> node;
    Span span;

    Item() = default;
    Item(Token t, Span s = {}) : node(std::move(t)), span(s) {}
    Item(Group g, Span s = {}) : node(std::move(g)), span(s) {}

    bool is_token() const { return std::holds_alternative<Token>(node); }
    const Token& token() const { return std::get<Token>(node); }
    const Group& group() const { return std::get<Group>(node); }
};

struct Facade {
    std::vector<Item> items;
    Span span;
};

struct Level {
    std::string id;
    int repeat_count = 1;
    std::vector<Facade> facades;
    Span span;
};

/// One building: levels bottom to top, facades ordered front/right/back/left.
struct ProceduralCode {
    std::string building_id;
    std::optional<Vec3> dims;
    std::vector<Level> levels;
    Span span;
};

// Structural equality; spans are ignored.
bool operator==(const Group& a, const Group& b);
bool operator==(const Item& a, const Item& b);
bool operator==(const Facade& a, const Facade& b);
bool operator==(const Level& a, const Level& b);
bool operator==(const ProceduralCode& a, const ProceduralCode& b);

/// Parses every building in `text`.
std::vector<ProceduralCode> parse_all(std::string_view text);
/// Parses text holding exactly one building.
ProceduralCode parse(std::string_view text);

std::string serialize(const ProceduralCode& code);
std::string serialize(std::span<const ProceduralCode> codes);

/// Checks every token against the manifest; reports all unknown ids in one error.
/// Also rejects duplicate manifest ids and levels with more than four facades.
const ProceduralCode& resolve(const ProceduralCode& code, std::span<const AssetSpec> manifest);

/// Places assets for a building of size dims = (length, width, height).
InstantiationList expand(const ProceduralCode& code, std::span<const AssetSpec> manifest,
                         const Vec3& dims);

/// Facade length needed by the fixed tokens alone.
double min_facade_length(const Facade& facade, std::span<const AssetSpec> manifest);
/// Sum of level heights times repeat counts, before any vertical scaling.
double natural_height(const ProceduralCode& code, std::span<const AssetSpec> manifest);

using RawFacade = std::vector<std::string>;
using RawLevel = std::vector<RawFacade>;

/// Compresses raw per-level token rows into regular code: the widest tandem repeat
/// of each facade becomes a repeatable group and equal adjacent levels merge.
ProceduralCode regularize(std::span<const RawLevel> raw_levels,
                          std::string building_id = "building");

/// Literal code with no groups and no repeats; the reference for regularize.
ProceduralCode literal_code(std::span<const RawLevel> raw_levels,
                            std::string building_id = "building");

/// Building dims implied by raw rows (front row length, right row length, total height).
Vec3 dims_of(std::span<const RawLevel> raw_levels, std::span<const AssetSpec> manifest);

}  // namespace procsplat
