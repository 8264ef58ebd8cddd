#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ctbody/core.hpp"
#include "ctbody/mesh.hpp"

namespace ctbody {

enum class MeshFormat { Obj, Ply };

inline MeshFormat mesh_format_from_path(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".ply") return MeshFormat::Ply;
  throw Error(ErrorCode::Io, "unknown mesh extension: " + path);
}

/// Writes ASCII OBJ or binary little-endian PLY. Coordinates are written as
/// given; callers pick the unit convention.
inline void export_mesh(const Pts& vertices, const std::vector<std::array<int, 3>>& faces,
                        const std::string& path, MeshFormat format) {
  if (vertices.rows() == 0 || faces.empty()) {
    throw Error(ErrorCode::EmptyMesh, "refusing to export empty mesh");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path);
  if (format == MeshFormat::Obj) {
    std::ostringstream ss;
    ss.imbue(std::locale::classic());
    char buf[128];
    for (int i = 0; i < vertices.rows(); ++i) {
      std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", vertices(i, 0), vertices(i, 1),
                    vertices(i, 2));
      ss << buf;
    }
    for (const auto& f : faces) {
      ss << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
    out << ss.str();
  } else {
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << vertices.rows() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "element face " << faces.size() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";
    for (int i = 0; i < vertices.rows(); ++i) {
      float v[3] = {static_cast<float>(vertices(i, 0)), static_cast<float>(vertices(i, 1)),
                    static_cast<float>(vertices(i, 2))};
      out.write(reinterpret_cast<const char*>(v), sizeof(v));
    }
    for (const auto& f : faces) {
      const std::uint8_t n = 3;
      std::int32_t idx[3] = {f[0], f[1], f[2]};
      out.write(reinterpret_cast<const char*>(&n), 1);
      out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
    }
  }
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

inline void export_mesh(const TriMesh& mesh, const std::string& path, MeshFormat format) {
  export_mesh(mesh.vertices, mesh.faces, path, format);
}

inline TriMesh import_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open: " + path);
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v.x() >> v.y() >> v.z();
      verts.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
      }
      for (size_t i = 2; i < idx.size(); ++i) {
        faces.push_back({idx[0], idx[i - 1], idx[i]});
      }
    }
  }
  TriMesh mesh;
  mesh.vertices.resize(static_cast<int>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<int>(i)) = verts[i].transpose();
  mesh.faces = std::move(faces);
  return mesh;
}

/// Reads the binary little-endian PLY subset produced by export_mesh plus
/// float/double vertex properties from other tools.
inline TriMesh import_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open: " + path);
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw Error(ErrorCode::Io, "not a PLY file: " + path);
  long vertex_count = -1, face_count = -1;
  bool vertex_double = false;
  int vertex_props = 0;
  std::string current_element;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "binary_little_endian") {
        throw Error(ErrorCode::Io, "unsupported PLY format: " + fmt);
      }
    } else if (tag == "element") {
      std::string name;
      long count;
      ss >> name >> count;
      current_element = name;
      if (name == "vertex") vertex_count = count;
      if (name == "face") face_count = count;
    } else if (tag == "property" && current_element == "vertex") {
      std::string type;
      ss >> type;
      if (type == "double") vertex_double = true;
      if (type != "list") ++vertex_props;
    } else if (tag == "end_header") {
      break;
    }
  }
  if (vertex_count < 0 || face_count < 0) throw Error(ErrorCode::Io, "malformed PLY header");
  if (vertex_props < 3) throw Error(ErrorCode::Io, "PLY vertex element lacks x/y/z");
  TriMesh mesh;
  mesh.vertices.resize(vertex_count, 3);
  const size_t scalar = vertex_double ? 8 : 4;
  std::vector<char> row(scalar * static_cast<size_t>(vertex_props));
  for (long i = 0; i < vertex_count; ++i) {
    in.read(row.data(), static_cast<std::streamsize>(row.size()));
    for (int c = 0; c < 3; ++c) {
      if (vertex_double) {
        double v;
        std::memcpy(&v, row.data() + scalar * static_cast<size_t>(c), 8);
        mesh.vertices(i, c) = v;
      } else {
        float v;
        std::memcpy(&v, row.data() + scalar * static_cast<size_t>(c), 4);
        mesh.vertices(i, c) = static_cast<double>(v);
      }
    }
  }
  mesh.faces.reserve(static_cast<size_t>(face_count));
  for (long i = 0; i < face_count; ++i) {
    std::uint8_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 1);
    std::vector<std::int32_t> idx(n);
    in.read(reinterpret_cast<char*>(idx.data()), static_cast<std::streamsize>(4 * n));
    for (size_t j = 2; j < idx.size(); ++j) {
      mesh.faces.push_back({idx[0], idx[j - 1], idx[j]});
    }
  }
  if (!in) throw Error(ErrorCode::Io, "truncated PLY: " + path);
  return mesh;
}

inline TriMesh import_mesh(const std::string& path) {
  return mesh_format_from_path(path) == MeshFormat::Obj ? import_obj(path) : import_ply(path);
}

}  // namespace ctbody
