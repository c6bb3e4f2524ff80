#pragma once

#include "uvweave/fields.hpp"
#include "uvweave/flow.hpp"
#include "uvweave/warpmap.hpp"

#include <string>
#include <string_view>

namespace uvweave {

// PFM: 1 ("Pf") or 3 ("PF") float32 channels, rows stored bottom to top, a
// negative scale marks little-endian data. Malformed or truncated input
// throws FormatError naming the byte offset.
Field2 parse_pfm(std::string_view bytes);
std::string encode_pfm(const Field2& f, bool little_endian = true);
Field2 read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Field2& f, bool little_endian = true);

// PPM P6 with maxval 255; values scaled to [0, 1] on load, clamped and
// rounded on save.
Field2 parse_ppm(std::string_view bytes);
std::string encode_ppm(const Field2& f);
Field2 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Field2& f);

// Middlebury .flo ("PIEH", little-endian float32, pixel units). FlowField
// stores normalized units; conversion uses the grid size.
FlowField parse_flo(std::string_view bytes);
std::string encode_flo(const FlowField& f);
FlowField read_flo(const std::string& path);
void write_flo(const std::string& path, const FlowField& f);

// UV maps: 3-channel PFM (u, v, part index as float) plus a 1-channel PFM
// silhouette. `with_parts` decides whether the third channel is kept.
void write_uvmap(const std::string& uv_path, const std::string& mask_path, const UVMap& P);
UVMap read_uvmap(const std::string& uv_path, const std::string& mask_path, bool with_parts);

Mask read_mask(const std::string& path, int* width = nullptr, int* height = nullptr);
void write_mask(const std::string& path, const Mask& m, int width, int height);

std::string read_file(const std::string& path);
// Writes through a temporary file and a rename.
void write_file(const std::string& path, std::string_view bytes);

}  // namespace uvweave
