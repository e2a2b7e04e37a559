#pragma once

// Tensor container (.tns): one UTF-8 JSON header line
//   {"dtype":"f32","shape":[...],"order":"row-major","byteorder":"little"}
// terminated by '\n', followed immediately by the raw little-endian f32 raster.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdepth/grid.hpp"

namespace segdepth {

using Json = nlohmann::json;

struct TensorFile {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

std::string tensor_header(std::span<const std::int64_t> shape);

void write_tensor(const std::filesystem::path& path, std::span<const std::int64_t> shape,
                  std::span<const float> data);
TensorFile read_tensor(const std::filesystem::path& path);

void write_grid(const std::filesystem::path& path, const Grid<float>& grid);
// Throws unless the container is exactly 2D.
Grid<float> read_grid(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const Json& doc);
Json read_json(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace segdepth
