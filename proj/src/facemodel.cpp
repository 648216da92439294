#include "deforma/facemodel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "deforma/nearest.hpp"

namespace deforma {

void FaceBasis::validate() const {
  const std::size_t n = mean_shape.size();
  if (n < 4) throw InvalidArgument("face basis needs at least 4 vertices, got " + std::to_string(n));
  if (id_dims < 1) throw InvalidArgument("identity basis needs at least one column");
  if (exp_dims < 1) throw InvalidArgument("expression basis needs at least one column");
  if (landmark_indices.empty()) throw InvalidArgument("face basis needs at least one landmark");
  if (id_basis.size() != rows() * static_cast<std::size_t>(id_dims)) {
    throw InvalidArgument("identity basis size does not match 3N x d_i");
  }
  if (exp_basis.size() != rows() * static_cast<std::size_t>(exp_dims)) {
    throw InvalidArgument("expression basis size does not match 3N x d_e");
  }
  for (std::uint32_t idx : landmark_indices) {
    if (idx >= n) throw InvalidArgument("landmark index " + std::to_string(idx) + " out of range");
  }
  for (const Vec3& v : mean_shape) {
    if (!is_finite(v)) throw InvalidArgument("mean shape has non-finite coordinates");
  }
  if (!all_finite(id_basis) || !all_finite(exp_basis)) throw InvalidArgument("basis has non-finite entries");
}

Mesh reconstruct_shape(const FaceBasis& basis, const Coefficients& coeffs) {
  if (coeffs.beta.size() != static_cast<std::size_t>(basis.id_dims)) {
    throw InvalidArgument("identity coefficients beta have length " + std::to_string(coeffs.beta.size()) +
                          ", expected d_i = " + std::to_string(basis.id_dims));
  }
  if (coeffs.gamma.size() != static_cast<std::size_t>(basis.exp_dims)) {
    throw InvalidArgument("expression coefficients gamma have length " + std::to_string(coeffs.gamma.size()) +
                          ", expected d_e = " + std::to_string(basis.exp_dims));
  }
  const std::size_t rows = basis.rows();
  std::vector<double> id_part(rows, 0.0);
  std::vector<double> exp_part(rows, 0.0);
  for (int c = 0; c < basis.id_dims; ++c) {
    const double b = coeffs.beta[static_cast<std::size_t>(c)];
    for (std::size_t r = 0; r < rows; ++r) id_part[r] += basis.id_at(r, c) * b;
  }
  for (int c = 0; c < basis.exp_dims; ++c) {
    const double g = coeffs.gamma[static_cast<std::size_t>(c)];
    for (std::size_t r = 0; r < rows; ++r) exp_part[r] += basis.exp_at(r, c) * g;
  }
  Mesh mesh;
  mesh.vertices.resize(basis.vertex_count());
  for (std::size_t v = 0; v < basis.vertex_count(); ++v) {
    for (int k = 0; k < 3; ++k) {
      const std::size_t r = 3 * v + static_cast<std::size_t>(k);
      mesh.vertices[v][k] = basis.mean_shape[v][k] + id_part[r] + exp_part[r];
    }
  }
  return mesh;
}

std::vector<Vec3> extract_landmarks(const Mesh& mesh, const FaceBasis& basis) {
  std::vector<Vec3> out;
  out.reserve(basis.landmark_indices.size());
  for (std::uint32_t idx : basis.landmark_indices) {
    if (idx >= mesh.vertices.size()) {
      throw InvalidArgument("landmark index " + std::to_string(idx) + " out of range for a mesh of " +
                            std::to_string(mesh.vertices.size()) + " vertices");
    }
    out.push_back(mesh.vertices[idx]);
  }
  return out;
}

NearestVertex nearest_vertex(const Mesh& mesh, const Vec3& x) {
  if (mesh.vertices.empty()) throw InvalidArgument("nearest_vertex on an empty mesh");
  const PointIndex index(mesh.vertices);
  const NearestHit hit = index.nearest(x);
  return {hit.index, std::sqrt(hit.squared_distance)};
}

Vec3 reference_deformation(const FaceBasis& basis, std::span<const double> gamma, std::size_t vertex_index) {
  if (gamma.size() != static_cast<std::size_t>(basis.exp_dims)) {
    throw InvalidArgument("expression coefficients gamma have length " + std::to_string(gamma.size()) +
                          ", expected d_e = " + std::to_string(basis.exp_dims));
  }
  if (vertex_index >= basis.vertex_count()) {
    throw InvalidArgument("vertex index " + std::to_string(vertex_index) + " out of range");
  }
  Vec3 d;
  for (int k = 0; k < 3; ++k) {
    const std::size_t r = 3 * vertex_index + static_cast<std::size_t>(k);
    double acc = 0.0;
    for (int c = 0; c < basis.exp_dims; ++c) acc += basis.exp_at(r, c) * gamma[static_cast<std::size_t>(c)];
    d[k] = -acc;
  }
  return d;
}

namespace {

double cap_fraction(std::size_t index, std::size_t count) {
  return (static_cast<double>(index) + 0.5) / static_cast<double>(count);
}

std::vector<double> orthonormal_columns(std::mt19937_64& rng, std::size_t rows, int cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(static_cast<Eigen::Index>(rows), cols);
  for (int c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) g(static_cast<Eigen::Index>(r), c) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(rows), cols);
  // Fix the sign so each column correlates positively with its source.
  for (int c = 0; c < cols; ++c) {
    if (q.col(c).dot(g.col(c)) < 0) q.col(c) *= -1.0;
  }
  return {q.data(), q.data() + q.size()};
}

}  // namespace

bool is_contour_vertex(std::size_t index, std::size_t vertex_count, const SynthLayout& layout) {
  // Polar angle grows with sqrt of the index fraction.
  return std::sqrt(cap_fraction(index, vertex_count)) > layout.contour_fraction;
}

FaceBasis synth_basis(std::uint64_t seed, int vertices, int id_dims, int exp_dims, int landmarks,
                      const SynthLayout& layout) {
  if (vertices < 4) throw InvalidArgument("synth_basis needs at least 4 vertices");
  if (landmarks < 1 || landmarks > vertices) throw InvalidArgument("synth_basis needs 1 <= K <= N");
  if (id_dims < 1 || exp_dims < 1) throw InvalidArgument("synth_basis needs d_i >= 1 and d_e >= 1");
  const auto n = static_cast<std::size_t>(vertices);
  if (static_cast<std::size_t>(id_dims) > 3 * n || static_cast<std::size_t>(exp_dims) > 3 * n) {
    throw InvalidArgument("basis dimension exceeds 3N");
  }

  FaceBasis basis;
  basis.id_dims = id_dims;
  basis.exp_dims = exp_dims;
  basis.mean_shape.resize(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = layout.cap_angle * std::sqrt(cap_fraction(i, n));
    const double phi = golden * static_cast<double>(i);
    const double bump = std::cos(3.0 * phi) * std::sin(std::numbers::pi * theta / layout.cap_angle);
    const double radius = 1.0 + layout.bump_amplitude * bump;
    basis.mean_shape[i] = {radius * std::sin(theta) * std::cos(phi), radius * std::sin(theta) * std::sin(phi),
                           radius * std::cos(theta)};
  }

  std::mt19937_64 rng(seed);
  basis.id_basis = orthonormal_columns(rng, 3 * n, id_dims);
  basis.exp_basis = orthonormal_columns(rng, 3 * n, exp_dims);

  std::vector<std::uint32_t> interior;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_contour_vertex(i, n, layout)) interior.push_back(static_cast<std::uint32_t>(i));
  }
  if (interior.size() < static_cast<std::size_t>(landmarks)) {
    throw InvalidArgument("not enough interior vertices for " + std::to_string(landmarks) + " landmarks");
  }
  for (int k = 0; k < landmarks; ++k) {
    basis.landmark_indices.push_back(
        interior[static_cast<std::size_t>(k) * interior.size() / static_cast<std::size_t>(landmarks)]);
  }
  return basis;
}

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

using Kind = BasisFormatError::Kind;

}  // namespace

std::string encode_basis(const FaceBasis& basis) {
  basis.validate();
  std::string out = "FB01 " + std::to_string(basis.vertex_count()) + " " + std::to_string(basis.id_dims) + " " +
                    std::to_string(basis.exp_dims) + " " + std::to_string(basis.landmark_indices.size()) + "\n";
  for (const Vec3& v : basis.mean_shape) {
    put_le(out, v.x);
    put_le(out, v.y);
    put_le(out, v.z);
  }
  for (double v : basis.id_basis) put_le(out, v);
  for (double v : basis.exp_basis) put_le(out, v);
  for (std::uint32_t idx : basis.landmark_indices) put_le(out, idx);
  return out;
}

FaceBasis decode_basis(const std::string& bytes) {
  const std::size_t eol = bytes.find('\n');
  if (bytes.empty() || eol == std::string::npos || eol > 128) {
    throw BasisFormatError(Kind::Header, "basis file: missing or malformed FB01 header line");
  }
  std::istringstream header(bytes.substr(0, eol));
  std::string magic;
  long long n = 0, di = 0, de = 0, k = 0;
  if (!(header >> magic >> n >> di >> de >> k) || magic != "FB01") {
    throw BasisFormatError(Kind::Header, "basis file: header must read 'FB01 N d_i d_e K'");
  }
  std::string rest;
  if (header >> rest) throw BasisFormatError(Kind::Header, "basis file: trailing tokens in header");
  if (n < 0 || di < 0 || de < 0 || k < 0) {
    throw BasisFormatError(Kind::Validation, "basis file: negative dimension in header");
  }
  // Each dimension is bounded so that the payload size fits comfortably in 64 bits.
  constexpr long long kMaxDim = 1LL << 28;
  if (n > kMaxDim || di > kMaxDim || de > kMaxDim || k > kMaxDim ||
      static_cast<unsigned long long>(3 * n) * static_cast<unsigned long long>(1 + di + de) >
          (std::numeric_limits<std::size_t>::max() / 8) / 2) {
    throw BasisFormatError(Kind::Overflow, "basis file: dimensions overflow the payload size");
  }
  if (n < 4 || di < 1 || de < 1 || k < 1) {
    throw BasisFormatError(Kind::Validation, "basis file: requires N >= 4, d_i >= 1, d_e >= 1, K >= 1 (got N=" +
                                                 std::to_string(n) + ")");
  }
  const std::size_t rows = 3 * static_cast<std::size_t>(n);
  const std::size_t doubles = rows * static_cast<std::size_t>(1 + di + de);
  const std::size_t expected = doubles * 8 + static_cast<std::size_t>(k) * 4;
  const std::size_t payload = bytes.size() - eol - 1;
  if (payload < expected) {
    throw BasisFormatError(Kind::Truncated, "basis file: payload has " + std::to_string(payload) +
                                                " bytes, expected " + std::to_string(expected));
  }
  if (payload > expected) throw BasisFormatError(Kind::Header, "basis file: trailing bytes after payload");

  FaceBasis basis;
  basis.id_dims = static_cast<int>(di);
  basis.exp_dims = static_cast<int>(de);
  const char* p = bytes.data() + eol + 1;
  basis.mean_shape.resize(static_cast<std::size_t>(n));
  for (Vec3& v : basis.mean_shape) {
    for (int c = 0; c < 3; ++c, p += 8) v[c] = get_le<double>(p);
  }
  basis.id_basis.resize(rows * static_cast<std::size_t>(di));
  for (double& v : basis.id_basis) v = get_le<double>(p), p += 8;
  basis.exp_basis.resize(rows * static_cast<std::size_t>(de));
  for (double& v : basis.exp_basis) v = get_le<double>(p), p += 8;
  basis.landmark_indices.resize(static_cast<std::size_t>(k));
  for (std::uint32_t& idx : basis.landmark_indices) idx = get_le<std::uint32_t>(p), p += 4;
  try {
    basis.validate();
  } catch (const InvalidArgument& e) {
    throw BasisFormatError(Kind::Validation, std::string("basis file: ") + e.what());
  }
  return basis;
}

void save_basis(const FaceBasis& basis, const std::filesystem::path& path) {
  const std::string bytes = encode_basis(basis);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw BasisFormatError(Kind::Io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw BasisFormatError(Kind::Io, "failed writing " + path.string());
}

FaceBasis load_basis(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BasisFormatError(Kind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_basis(ss.str());
}

}  // namespace deforma
