#include "segdepth/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace segdepth {

static_assert(std::endian::native == std::endian::little, "tensor container assumes a little-endian host");

namespace {

std::runtime_error io_error(const std::filesystem::path& path, const std::string& what) {
  return std::runtime_error(path.string() + ": " + what);
}

}  // namespace

std::string tensor_header(std::span<const std::int64_t> shape) {
  nlohmann::ordered_json h;
  h["dtype"] = "f32";
  h["shape"] = std::vector<std::int64_t>(shape.begin(), shape.end());
  h["order"] = "row-major";
  h["byteorder"] = "little";
  return h.dump();
}

void write_tensor(const std::filesystem::path& path, std::span<const std::int64_t> shape,
                  std::span<const float> data) {
  std::int64_t count = 1;
  for (auto d : shape) {
    if (d < 0) throw std::invalid_argument("write_tensor: negative dimension");
    count *= d;
  }
  if (static_cast<std::size_t>(count) != data.size())
    throw std::invalid_argument("write_tensor: data size does not match shape");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error(path, "cannot open for writing");
  const std::string header = tensor_header(shape);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.put('\n');
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw io_error(path, "write failed");
}

TensorFile read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path, "cannot open tensor container");
  std::string line;
  if (!std::getline(in, line)) throw io_error(path, "missing header line");

  Json header;
  try {
    header = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw io_error(path, std::string("malformed header: ") + e.what());
  }
  if (!header.is_object() || header.value("dtype", "") != "f32" || header.value("order", "") != "row-major" ||
      header.value("byteorder", "") != "little" || !header.contains("shape") || !header["shape"].is_array())
    throw io_error(path, "malformed header: expected f32/row-major/little with a shape array");

  TensorFile t;
  std::int64_t count = 1;
  for (const auto& d : header["shape"]) {
    if (!d.is_number_integer() || d.get<std::int64_t>() < 0) throw io_error(path, "malformed header: bad dimension");
    t.shape.push_back(d.get<std::int64_t>());
    count *= t.shape.back();
  }

  t.data.resize(static_cast<std::size_t>(count));
  in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(float)))
    throw io_error(path, "truncated raster");
  if (in.peek() != std::char_traits<char>::eof()) throw io_error(path, "trailing bytes after raster");
  return t;
}

void write_grid(const std::filesystem::path& path, const Grid<float>& grid) {
  const std::int64_t shape[2] = {grid.rows(), grid.cols()};
  write_tensor(path, shape, grid.data());
}

Grid<float> read_grid(const std::filesystem::path& path) {
  TensorFile t = read_tensor(path);
  if (t.shape.size() != 2) throw io_error(path, "expected a 2D tensor");
  return Grid<float>(Shape2{static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1])}, std::move(t.data));
}

void write_json(const std::filesystem::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path, "cannot open JSON document");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw io_error(path, std::string("malformed JSON: ") + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error(path, "cannot open for writing");
  out << text;
  if (!out) throw io_error(path, "write failed");
}

}  // namespace segdepth
