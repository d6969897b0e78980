#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>

#include "matmart/core_types.hpp"

namespace matmart {

namespace detail {

// Coordinates already inside [0,1] are kept so chart edges at u=1 stay put.
inline double wrap_unit(double v) {
  if (v >= 0.0 && v <= 1.0) return v;
  return v - std::floor(v);
}

inline long parse_obj_index(std::string_view token, std::size_t count, std::size_t face, const char* what) {
  long idx = 0;
  try {
    idx = std::stol(std::string(token));
  } catch (const std::exception&) {
    throw ValidationError("mesh: face " + std::to_string(face) + " has a malformed " + what + " index");
  }
  // Negative indices are relative to the end of the list read so far.
  if (idx < 0) idx = static_cast<long>(count) + idx + 1;
  if (idx < 1 || static_cast<std::size_t>(idx) > count) {
    throw ValidationError("mesh: face " + std::to_string(face) + " references a " + what + " index out of range");
  }
  return idx - 1;
}

}  // namespace detail

// Parses OBJ text. Every face must be a triangle whose corners carry
// position/uv/normal indices.
inline TriangleMesh parse_obj(std::istream& in) {
  TriangleMesh mesh;
  std::string line;
  std::size_t face_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ValidationError("mesh: malformed vertex record");
      mesh.positions.emplace_back(x, y, z);
    } else if (tag == "vn") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ValidationError("mesh: malformed normal record");
      const Vec3 n(x, y, z);
      if (!(n.norm() > 1e-12)) throw ValidationError("mesh: zero-length normal");
      mesh.normals.push_back(n.normalized());
    } else if (tag == "vt") {
      double u, v;
      if (!(ls >> u >> v)) throw ValidationError("mesh: malformed uv record");
      mesh.uvs.emplace_back(detail::wrap_unit(u), detail::wrap_unit(v));
    } else if (tag == "f") {
      ++face_no;
      std::vector<std::string> corners;
      std::string c;
      while (ls >> c) corners.push_back(c);
      if (corners.size() != 3) {
        throw ValidationError("mesh: face " + std::to_string(face_no) + " has " + std::to_string(corners.size()) +
                              " vertices; only triangles are supported");
      }
      MeshTriangle tri;
      for (int k = 0; k < 3; ++k) {
        const std::string& s = corners[k];
        const auto a = s.find('/');
        const auto b = a == std::string::npos ? std::string::npos : s.find('/', a + 1);
        const std::string_view sv(s);
        const std::string_view pos = sv.substr(0, a);
        const std::string_view uv = a == std::string::npos ? std::string_view{} : sv.substr(a + 1, b - a - 1);
        const std::string_view nrm = b == std::string::npos ? std::string_view{} : sv.substr(b + 1);
        if (uv.empty() || nrm.empty()) {
          throw ValidationError("mesh not reconstruction-ready: face " + std::to_string(face_no) + " lacks " +
                                (uv.empty() ? "a uv" : "a normal") + " index");
        }
        tri.position[k] = static_cast<std::uint32_t>(detail::parse_obj_index(pos, mesh.positions.size(), face_no, "position"));
        tri.uv[k] = static_cast<std::uint32_t>(detail::parse_obj_index(uv, mesh.uvs.size(), face_no, "uv"));
        tri.normal[k] = static_cast<std::uint32_t>(detail::parse_obj_index(nrm, mesh.normals.size(), face_no, "normal"));
      }
      mesh.triangles.push_back(tri);
    }
  }
  mesh.validate();
  return mesh;
}

inline TriangleMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file " + path.string());
  return parse_obj(in);
}

inline void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh file " + path.string());
  out << std::setprecision(17);
  for (const auto& p : mesh.positions) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const auto& t : mesh.uvs) out << "vt " << t.x() << ' ' << t.y() << '\n';
  for (const auto& n : mesh.normals) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  for (const auto& t : mesh.triangles) {
    out << 'f';
    for (int k = 0; k < 3; ++k) out << ' ' << t.position[k] + 1 << '/' << t.uv[k] + 1 << '/' << t.normal[k] + 1;
    out << '\n';
  }
  if (!out) throw IoError("failed writing mesh file " + path.string());
}

}  // namespace matmart
