#pragma once

#include "procsplat/assembly.hpp"
#include "procsplat/grammar.hpp"
#include "procsplat/image.hpp"
#include "procsplat/splat.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace procsplat {

using Json = nlohmann::json;

Json vec_to_json(const Vec3& v);
Vec3 vec3_from_json(const Json& j, const std::string& what);

Json asset_spec_to_json(const AssetSpec& spec);
AssetSpec asset_spec_from_json(const Json& j);

/// Accepts either a bare array of asset specs or an object with an "assets" array.
std::vector<AssetSpec> manifest_from_json(const Json& j);
Json manifest_to_json(std::span<const AssetSpec> manifest);

/// {asset_id, R: 9 row-major, T: 3, S: 3, variance_index?}
Json instantiation_to_json(const Instantiation& inst);
Instantiation instantiation_from_json(const Json& j);
Json instantiations_to_json(const InstantiationList& list);
/// Accepts a bare array or an object with an "instantiations" array.
InstantiationList instantiations_from_json(const Json& j);

/// {world_to_camera: 16 row-major, fx, fy, cx, cy, width, height}
Json camera_to_json(const Camera& cam);
Camera camera_from_json(const Json& j);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);
std::string read_text(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// A building layout as given to fit: procedural code text, or an explicit
/// instantiation list (JSON) for pre-annotated captures.
struct Layout {
    std::optional<ProceduralCode> code;
    InstantiationList instantiations;
};

/// Loads code text (*.txt or anything not JSON) and expands it with the dims it
/// declares, or loads a JSON instantiation list.
Layout load_layout(const std::filesystem::path& path, std::span<const AssetSpec> manifest);

struct Checkpoint {
    int sh_degree = kDefaultShDegree;
    std::vector<BaseAsset> bases;
    std::vector<VarianceAsset> variances;
    InstantiationList instantiations;
    std::string code_text;
    int iterations = 0;

    Scene assemble_scene() const;
    std::vector<AssetSpec> manifest() const;
    /// Total stored floating-point parameters across all assets plus 15 per instance
    /// (9 rotation + 3 translation + 3 scale).
    std::size_t parameter_count() const;
    std::size_t gaussian_count() const;
};

/// Directory with manifest.json and one PLY per asset. The directory is built next
/// to `dir` and renamed into place.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct View {
    std::string name;
    Image image;
    Camera camera;
};

struct Dataset {
    std::vector<View> train;
    std::vector<View> test;
};

/// cameras.json (array of {world_to_camera, fx, fy, cx, cy, width, height, image, split})
/// plus 8-bit PNGs. Throws IoError when cameras.json is missing and ShapeError when an
/// image disagrees with its camera.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

}  // namespace procsplat
