#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "snerf/field.hpp"
#include "snerf/geometry.hpp"
#include "snerf/render.hpp"

namespace snerf {

/// Scalar samples on the nodes of an axis-aligned lattice, x fastest.
struct DensityGrid {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
  std::array<int, 3> size{2, 2, 2};
  std::vector<float> values;

  float at(int i, int j, int k) const { return values[(std::size_t(k) * size[1] + j) * size[0] + i]; }
  float& at(int i, int j, int k) { return values[(std::size_t(k) * size[1] + j) * size[0] + i]; }
  Vec3 spacing() const;
  Vec3 node(int i, int j, int k) const;
};

/// Fine-network density at every node of an n^3 lattice spanning [lo, hi].
DensityGrid density_grid(const FieldEvaluator<float>& field, const Vec3& lo, const Vec3& hi, int resolution,
                         int threads = 1);

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;  ///< unit, pointing toward decreasing density
  std::vector<Eigen::Vector3i> triangles;
};

/// Isosurface of `grid` at `iso`. Nodes above iso are inside. Vertices are
/// shared between neighbouring cells, so closed level sets give closed meshes.
Mesh marching_cubes(const DensityGrid& grid, double iso);

struct SemanticMesh {
  Mesh mesh;
  std::vector<int> labels;
  std::vector<Eigen::VectorXd> probabilities;
};

struct TextureSettings {
  double offset_voxels = 2.0;  ///< ray origin sits this far outside the surface
  double far_voxels = 4.0;
  RenderConfig render;
};

/// Volume-renders semantics along the inward normal of every vertex.
SemanticMesh semantic_texture(const FieldEvaluator<float>& field, const Mesh& mesh, double voxel_size,
                              const TextureSettings& settings);

/// Fixed colour per class id (wraps after the palette length).
std::array<std::uint8_t, 3> class_color(int class_id);

/// ASCII PLY with per-vertex normal, colour and class id.
void write_ply(const std::filesystem::path& path, const SemanticMesh& mesh);

}  // namespace snerf
