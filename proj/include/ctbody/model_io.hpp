#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctbody/body_model.hpp"
#include "ctbody/core.hpp"

namespace ctbody {

// Body-model container: 8-byte magic, u64 LE header length, JSON header
// (dims, parent tree, named array offsets/counts), then little-endian f64
// arrays. Array order: template_vertices (M*3), shape_basis (B blocks of
// 3M), joint_regressor (K*M row-major), skin_weights (M*K row-major),
// faces (F*3). A "pose_basis" array slot is reserved for assets that carry
// pose correctives; this implementation skips its payload.
inline constexpr char kModelMagic[9] = "CTBMSPEC";

namespace detail {

inline void write_f64(std::ofstream& out, const double* data, size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

inline std::vector<double> read_f64(std::ifstream& in, std::uint64_t offset, size_t count,
                                    const std::string& what) {
  std::vector<double> buf(count);
  in.seekg(static_cast<std::streamoff>(offset));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * 8));
  if (!in) throw Error(ErrorCode::Io, "truncated model array: " + what);
  return buf;
}

}  // namespace detail

inline void save_model(const BodyModelSpec& spec, const std::string& path) {
  const int m = spec.vertex_count();
  const int k = spec.joint_count();
  const int b = spec.shape_dim();
  const int f = static_cast<int>(spec.faces.size());

  nlohmann::json header;
  header["vertex_count"] = m;
  header["joint_count"] = k;
  header["shape_dim"] = b;
  header["face_count"] = f;
  header["parent"] = spec.parent;
  nlohmann::json arrays;
  std::uint64_t offset = 0;
  auto declare = [&](const std::string& name, std::uint64_t count) {
    arrays[name] = {{"offset", offset}, {"count", count}};
    offset += count * 8;
  };
  declare("template_vertices", static_cast<std::uint64_t>(m) * 3);
  declare("shape_basis", static_cast<std::uint64_t>(3 * m) * static_cast<std::uint64_t>(b));
  declare("joint_regressor", static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(m));
  declare("skin_weights", static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(k));
  declare("faces", static_cast<std::uint64_t>(f) * 3);
  header["arrays"] = arrays;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path);
  out.write(kModelMagic, 8);
  const std::uint64_t hlen = header_str.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

  std::vector<double> buf;
  buf.reserve(static_cast<size_t>(3 * m));
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < 3; ++c) buf.push_back(spec.template_vertices(i, c));
  }
  detail::write_f64(out, buf.data(), buf.size());
  for (int col = 0; col < b; ++col) {
    buf.assign(static_cast<size_t>(3 * m), 0.0);
    for (int r = 0; r < 3 * m; ++r) buf[static_cast<size_t>(r)] = spec.shape_basis(r, col);
    detail::write_f64(out, buf.data(), buf.size());
  }
  buf.clear();
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < m; ++i) buf.push_back(spec.joint_regressor(j, i));
  }
  detail::write_f64(out, buf.data(), buf.size());
  buf.clear();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) buf.push_back(spec.skin_weights(i, j));
  }
  detail::write_f64(out, buf.data(), buf.size());
  buf.clear();
  for (const auto& face : spec.faces) {
    for (int idx : face) buf.push_back(static_cast<double>(idx));
  }
  detail::write_f64(out, buf.data(), buf.size());
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

inline BodyModelSpec load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open: " + path);
  char magic[9] = {0};
  in.read(magic, 8);
  if (std::string(magic) != kModelMagic) throw Error(ErrorCode::Io, "bad model magic: " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw Error(ErrorCode::Io, "truncated model header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Io, std::string("bad model header: ") + e.what());
  }
  const int m = header.at("vertex_count").get<int>();
  const int k = header.at("joint_count").get<int>();
  const int b = header.at("shape_dim").get<int>();
  const int f = header.at("face_count").get<int>();
  const std::uint64_t data_start = 16 + hlen;
  const auto& arrays = header.at("arrays");
  auto fetch = [&](const std::string& name, size_t expect) {
    const auto& a = arrays.at(name);
    const std::uint64_t count = a.at("count").get<std::uint64_t>();
    if (count != expect) {
      throw Error(ErrorCode::Io, "array " + name + " has unexpected length in " + path);
    }
    return detail::read_f64(in, data_start + a.at("offset").get<std::uint64_t>(), expect, name);
  };

  BodyModelSpec spec;
  spec.parent = header.at("parent").get<std::vector<int>>();
  if (static_cast<int>(spec.parent.size()) != k) {
    throw Error(ErrorCode::Io, "parent array length mismatch in " + path);
  }
  auto tv = fetch("template_vertices", static_cast<size_t>(3 * m));
  spec.template_vertices.resize(m, 3);
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < 3; ++c) spec.template_vertices(i, c) = tv[static_cast<size_t>(3 * i + c)];
  }
  auto sb = fetch("shape_basis", static_cast<size_t>(3 * m) * static_cast<size_t>(b));
  spec.shape_basis.resize(3 * m, b);
  for (int col = 0; col < b; ++col) {
    for (int r = 0; r < 3 * m; ++r) {
      spec.shape_basis(r, col) = sb[static_cast<size_t>(col * 3 * m + r)];
    }
  }
  auto jr = fetch("joint_regressor", static_cast<size_t>(k) * static_cast<size_t>(m));
  spec.joint_regressor.resize(k, m);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < m; ++i) spec.joint_regressor(j, i) = jr[static_cast<size_t>(j * m + i)];
  }
  auto sw = fetch("skin_weights", static_cast<size_t>(m) * static_cast<size_t>(k));
  spec.skin_weights.resize(m, k);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) spec.skin_weights(i, j) = sw[static_cast<size_t>(i * k + j)];
  }
  auto fc = fetch("faces", static_cast<size_t>(f) * 3);
  spec.faces.resize(static_cast<size_t>(f));
  for (int i = 0; i < f; ++i) {
    for (int c = 0; c < 3; ++c) {
      spec.faces[static_cast<size_t>(i)][static_cast<size_t>(c)] =
          static_cast<int>(fc[static_cast<size_t>(3 * i + c)]);
    }
  }
  validate_spec(spec);
  return spec;
}

// BodyParams JSON (used by the CLI and dataset entries).
inline nlohmann::json params_to_json(const BodyParams& p) {
  nlohmann::json j;
  j["beta"] = std::vector<double>(p.beta.data(), p.beta.data() + p.beta.size());
  std::vector<std::array<double, 3>> theta(static_cast<size_t>(p.theta.rows()));
  for (int k = 0; k < p.theta.rows(); ++k) {
    theta[static_cast<size_t>(k)] = {p.theta(k, 0), p.theta(k, 1), p.theta(k, 2)};
  }
  j["theta"] = theta;
  j["trans"] = std::array<double, 3>{p.trans.x(), p.trans.y(), p.trans.z()};
  return j;
}

inline BodyParams params_from_json(const nlohmann::json& j) {
  BodyParams p;
  const auto beta = j.at("beta").get<std::vector<double>>();
  p.beta = Eigen::Map<const VecX>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  const auto theta = j.at("theta").get<std::vector<std::array<double, 3>>>();
  p.theta.resize(static_cast<int>(theta.size()), 3);
  for (size_t k = 0; k < theta.size(); ++k) {
    for (int c = 0; c < 3; ++c) p.theta(static_cast<int>(k), c) = theta[k][static_cast<size_t>(c)];
  }
  const auto trans = j.at("trans").get<std::array<double, 3>>();
  p.trans = Vec3(trans[0], trans[1], trans[2]);
  return p;
}

inline void save_params(const BodyParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path);
  out << params_to_json(p).dump(2) << "\n";
}

inline BodyParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
    return params_from_json(j);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Io, std::string("bad params json: ") + e.what());
  }
}

}  // namespace ctbody
