#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "deforma/common.hpp"

namespace deforma {

/// Linear face model: mean shape plus identity and expression bases.
///
/// Bases are stored column-major as 3N x d matrices; row 3v+k is
/// coordinate k of vertex v.
struct FaceBasis {
  std::vector<Vec3> mean_shape;
  std::vector<double> id_basis;   // 3N x id_dims, column-major
  std::vector<double> exp_basis;  // 3N x exp_dims, column-major
  std::vector<std::uint32_t> landmark_indices;
  int id_dims = 0;
  int exp_dims = 0;

  std::size_t vertex_count() const { return mean_shape.size(); }
  std::size_t rows() const { return 3 * mean_shape.size(); }
  double id_at(std::size_t row, int col) const { return id_basis[static_cast<std::size_t>(col) * rows() + row]; }
  double exp_at(std::size_t row, int col) const { return exp_basis[static_cast<std::size_t>(col) * rows() + row]; }

  /// Throws InvalidArgument when any structural invariant is violated.
  void validate() const;

  friend bool operator==(const FaceBasis&, const FaceBasis&) = default;
};

struct Mesh {
  std::vector<Vec3> vertices;
};

struct Coefficients {
  std::vector<double> beta;   // identity
  std::vector<double> gamma;  // expression
};

struct NearestVertex {
  std::size_t index = 0;
  double distance = 0.0;
};

/// mean + B_id * beta + B_exp * gamma, with each product accumulated
/// column by column from zero.
Mesh reconstruct_shape(const FaceBasis& basis, const Coefficients& coeffs);

std::vector<Vec3> extract_landmarks(const Mesh& mesh, const FaceBasis& basis);

/// Closest vertex by squared Euclidean distance, lowest index on ties.
NearestVertex nearest_vertex(const Mesh& mesh, const Vec3& x);

/// Displacement taking vertex `vertex_index` of the expressed face back to
/// the neutral face: -(B_exp rows of the vertex) * gamma.
Vec3 reference_deformation(const FaceBasis& basis, std::span<const double> gamma, std::size_t vertex_index);

/// Vertex positions depend only on this layout; bases on the seed.
struct SynthLayout {
  double cap_angle = 1.1;        // polar extent of the face region (radians)
  double bump_amplitude = 0.2;   // radial bump, radius stays in [1-a, 1+a]
  double contour_fraction = 0.85;  // vertices beyond this share of the cap form the contour band
};

/// Deterministic desk-scale face model. Vertices lie on a spherical cap
/// facing +z with a low-frequency radial bump; bases are seeded Gaussian
/// matrices with orthonormalized columns; landmarks are spread over the
/// vertices inside the contour band.
FaceBasis synth_basis(std::uint64_t seed, int vertices, int id_dims, int exp_dims, int landmarks,
                      const SynthLayout& layout = {});

/// True when vertex `index` of a synthesized layout lies on the contour band.
bool is_contour_vertex(std::size_t index, std::size_t vertex_count, const SynthLayout& layout = {});

/// Error raised when reading a basis file. Each failure class has its own kind.
class BasisFormatError : public std::runtime_error {
 public:
  enum class Kind { Io, Header, Truncated, Overflow, Validation };
  BasisFormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// "FB01" file: text header `FB01 N d_i d_e K` and a newline, then
/// little-endian float64 mean shape (3N), id basis (3N*d_i), expression
/// basis (3N*d_e), then K little-endian uint32 landmark indices.
void save_basis(const FaceBasis& basis, const std::filesystem::path& path);
FaceBasis load_basis(const std::filesystem::path& path);

std::string encode_basis(const FaceBasis& basis);
FaceBasis decode_basis(const std::string& bytes);

}  // namespace deforma
