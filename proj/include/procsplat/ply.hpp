#pragma once

#include "procsplat/splat.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace procsplat {

/// Binary little-endian splat PLY with the usual property names
/// (x y z nx ny nz f_dc_* f_rest_* opacity scale_* rot_*), float32.
/// f_rest is stored channel-major. The reader locates properties by name and
/// accepts float or double columns in any order.
std::string encode_ply(const std::vector<Gaussian3D>& gaussians, int sh_degree);
std::vector<Gaussian3D> decode_ply(const std::string& bytes);

void write_ply(const std::filesystem::path& path, const std::vector<Gaussian3D>& gaussians, int sh_degree);
std::vector<Gaussian3D> read_ply(const std::filesystem::path& path);

/// Rounds every parameter through float32, matching what a PLY round trip keeps.
Gaussian3D to_float32(const Gaussian3D& g);

}  // namespace procsplat
