#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matmart/core_types.hpp"

namespace matmart {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

// Writes an 8- or 16-bit PNG. One channel becomes grayscale, two channels are
// written as RGB with blue = 0, three as RGB, four as RGBA. Values are clamped
// to [0,1] and rounded to the nearest code.
inline void save_png(const std::filesystem::path& path, const ImageBuffer& img, int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16) throw ValidationError("png: bit depth must be 8 or 16");
  detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot write image " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: cannot allocate writer");
  }
  const volatile int out_channels = img.channels() == 2 ? 3 : img.channels();
  const volatile int color_type = out_channels == 1   ? PNG_COLOR_TYPE_GRAY
                         : out_channels == 3 ? PNG_COLOR_TYPE_RGB
                                             : PNG_COLOR_TYPE_RGBA;
  const std::size_t bytes_per_sample = bit_depth / 8;
  const volatile double max_code = bit_depth == 8 ? 255.0 : 65535.0;
  std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * out_channels * bytes_per_sample);

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width(), img.height(), bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < out_channels; ++c) {
        const double v = c < img.channels() ? img.at(x, y, c) : 0.0;
        const auto code = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * max_code));
        const std::size_t o = (static_cast<std::size_t>(x) * out_channels + c) * bytes_per_sample;
        if (bit_depth == 8) {
          row[o] = static_cast<png_byte>(code);
        } else {
          row[o] = static_cast<png_byte>(code >> 8);  // PNG is big-endian
          row[o + 1] = static_cast<png_byte>(code & 0xff);
        }
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads a PNG into [0,1] values. Palette images are expanded to RGB; the
// channel count follows the file (gray 1, gray+alpha 2, RGB 3, RGBA 4).
inline ImageBuffer load_png(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open image " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: cannot allocate reader");
  }
  std::vector<png_byte> data;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: corrupt image " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  data.resize(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = data.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageBuffer img(width, height, channels);
  const double max_code = depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = static_cast<std::size_t>(x) * channels + c;
        const unsigned code = depth == 16 ? (rows[y][2 * i] << 8) | rows[y][2 * i + 1] : rows[y][i];
        img.at(x, y, c) = code / max_code;
      }
    }
  }
  return img;
}

// Re-channels an image: grayscale is replicated, surplus channels dropped,
// missing colour channels filled with 0.
inline ImageBuffer with_channels(const ImageBuffer& img, int channels) {
  if (img.channels() == channels) return img;
  ImageBuffer out(img.width(), img.height(), channels);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < channels; ++c) {
        double v = 0.0;
        if (img.channels() == 1) {
          v = c < 3 ? img.at(x, y, 0) : 1.0;
        } else if (c < img.channels()) {
          v = img.at(x, y, c);
        }
        out.at(x, y, c) = v;
      }
    }
  }
  return out;
}

inline ImageBuffer load_image(const std::filesystem::path& path, int channels) {
  return with_channels(load_png(path), channels);
}

// ---------------------------------------------------------------------------
// Cameras
// ---------------------------------------------------------------------------
struct NamedCamera {
  std::string name;
  Camera camera;
};

inline Camera camera_from_json(const nlohmann::json& j) {
  Camera cam;
  try {
    const auto& r = j.at("rotation");
    const auto& t = j.at("translation");
    if (!r.is_array() || r.size() != 9 || !t.is_array() || t.size() != 3) {
      throw ValidationError("cameras: rotation needs 9 numbers and translation 3");
    }
    for (int i = 0; i < 9; ++i) cam.rotation(i / 3, i % 3) = r.at(i).get<double>();
    for (int i = 0; i < 3; ++i) cam.translation(i) = t.at(i).get<double>();
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("cameras: malformed entry: ") + e.what());
  }
  cam.validate();
  return cam;
}

inline nlohmann::json camera_to_json(const std::string& name, const Camera& cam) {
  nlohmann::json j;
  j["name"] = name;
  std::vector<double> r(9);
  for (int i = 0; i < 9; ++i) r[i] = cam.rotation(i / 3, i % 3);
  j["rotation"] = r;
  j["translation"] = {cam.translation.x(), cam.translation.y(), cam.translation.z()};
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  return j;
}

inline std::vector<NamedCamera> parse_cameras(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("cameras: malformed JSON: ") + e.what());
  }
  if (!j.is_array()) throw ValidationError("cameras: top level must be an array");
  std::vector<NamedCamera> out;
  for (const auto& e : j) {
    std::string name;
    try {
      name = e.at("name").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(std::string("cameras: malformed entry: ") + ex.what());
    }
    out.push_back({name, camera_from_json(e)});
  }
  return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<NamedCamera> load_cameras(const std::filesystem::path& path) {
  return parse_cameras(read_text_file(path));
}

inline void save_cameras(const std::vector<NamedCamera>& cams, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : cams) j.push_back(camera_to_json(c.name, c.camera));
  write_text_file(path, j.dump(2));
}

// ---------------------------------------------------------------------------
// Atlas files: albedo.png (8-bit RGB), rm.png (8-bit, R roughness, G
// metallic), weights.png (16-bit gray, weight / max weight), atlas.json.
// ---------------------------------------------------------------------------
inline void save_atlas(const UVMaterialAtlas& atlas, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_png(dir / "albedo.png", atlas.albedo, 8);
  save_png(dir / "rm.png", atlas.rm, 8);
  const double max_w = atlas.max_weight();
  ImageBuffer normalized = atlas.weights;
  if (max_w > 0.0) {
    for (double& w : normalized.values()) w = std::clamp(w / max_w, 0.0, 1.0);
  }
  save_png(dir / "weights.png", normalized, 16);
  nlohmann::json meta;
  meta["resolution"] = atlas.resolution;
  meta["max_weight"] = max_w;
  meta["version"] = atlas.version;
  write_text_file(dir / "atlas.json", meta.dump(2));
}

inline UVMaterialAtlas load_atlas(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text_file(dir / "atlas.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("atlas.json: ") + e.what());
  }
  const int res = meta.at("resolution").get<int>();
  const double max_w = meta.at("max_weight").get<double>();
  UVMaterialAtlas atlas = UVMaterialAtlas::empty(res);
  atlas.albedo = load_image(dir / "albedo.png", 3);
  atlas.rm = load_image(dir / "rm.png", 2);
  atlas.weights = load_image(dir / "weights.png", 1);
  if (atlas.albedo.width() != res || atlas.rm.width() != res || atlas.weights.width() != res ||
      atlas.albedo.height() != res || atlas.rm.height() != res || atlas.weights.height() != res) {
    throw ValidationError("atlas: image dimensions do not match atlas.json resolution");
  }
  for (double& w : atlas.weights.values()) w *= max_w;
  atlas.version = meta.value("version", std::uint64_t{0});
  return atlas;
}

}  // namespace matmart
