#include <doctest.h>

#include <map>

#include "snerf/meshing.hpp"

using namespace snerf;

namespace {

DensityGrid sphere_grid(int n, double radius) {
  DensityGrid g;
  g.lo = Vec3::Constant(-1.0);
  g.hi = Vec3::Constant(1.0);
  g.size = {n, n, n};
  g.values.resize(std::size_t(n) * n * n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) g.at(i, j, k) = g.node(i, j, k).norm() < radius ? 10.0f : 0.0f;
    }
  }
  return g;
}

/// Field with constant density inside a sphere and class 2 logits there.
class SphereField final : public FieldEvaluator<float> {
 public:
  SphereField(double radius, float density) : radius_(radius), density_(density) {}
  int num_classes() const override { return 3; }
  void evaluate(NetworkId, const Matrix<float>& pos, const Matrix<float>&, FieldBatch<float>& out) const override {
    const auto n = pos.cols();
    out.sigma.resize(n);
    out.rgb = Matrix<float>::Constant(3, n, 0.5f);
    out.logits = Matrix<float>::Zero(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool in = pos.col(i).cast<double>().norm() < radius_;
      out.sigma(i) = in ? density_ : 0.0f;
      if (in) out.logits(2, i) = 5.0f;
    }
  }

 private:
  double radius_;
  float density_;
};

}  // namespace

TEST_CASE("marching cubes recovers an analytic sphere and is closed") {
  const int n = 40;
  const double r = 0.6;
  const DensityGrid g = sphere_grid(n, r);
  const Mesh mesh = marching_cubes(g, 5.0);
  REQUIRE(!mesh.triangles.empty());
  double mean = 0.0;
  for (const auto& v : mesh.vertices) mean += v.norm();
  mean /= double(mesh.vertices.size());
  CHECK(std::abs(mean - r) <= g.spacing().x());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    CHECK(mesh.normals[v].norm() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(mesh.normals[v].dot(mesh.vertices[v]) > 0.0);  // outward
  }
  // Closed 2-manifold: every edge is shared by exactly two triangles.
  std::map<std::pair<int, int>, int> edge_use;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      edge_use[{std::min(a, b), std::max(a, b)}]++;
    }
  }
  for (const auto& [edge, count] : edge_use) CHECK(count == 2);
  // Euler characteristic of a sphere.
  CHECK(int(mesh.vertices.size()) - int(edge_use.size()) + int(mesh.triangles.size()) == 2);
}

TEST_CASE("marching cubes of a uniform grid is empty") {
  DensityGrid g = sphere_grid(8, 0.0);
  CHECK(marching_cubes(g, 5.0).triangles.empty());
  for (auto& v : g.values) v = 10.0f;
  CHECK(marching_cubes(g, 5.0).triangles.empty());
}

TEST_CASE("every ambiguous corner pattern yields closed loops") {
  // Random binary grids stress all 256 configurations, including ambiguous faces.
  Rng rng(12);
  DensityGrid g;
  g.size = {9, 9, 9};
  g.values.resize(729);
  for (auto& v : g.values) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
  // Pad with outside so the surface closes.
  for (int k = 0; k < 9; ++k) {
    for (int j = 0; j < 9; ++j) {
      for (int i = 0; i < 9; ++i) {
        if (i == 0 || j == 0 || k == 0 || i == 8 || j == 8 || k == 8) g.at(i, j, k) = 0.0f;
      }
    }
  }
  const Mesh mesh = marching_cubes(g, 0.5);
  std::map<std::pair<int, int>, int> edge_use;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      edge_use[{std::min(a, b), std::max(a, b)}]++;
    }
  }
  for (const auto& [edge, count] : edge_use) CHECK(count % 2 == 0);
}

TEST_CASE("semantic texture labels an analytic object and stays normalised") {
  const SphereField field(0.5, 50.0f);
  const DensityGrid g = density_grid(field, Vec3::Constant(-1), Vec3::Constant(1), 24);
  const Mesh mesh = marching_cubes(g, 5.0);
  TextureSettings settings;
  settings.render.num_coarse = 16;
  settings.render.num_fine = 16;
  const auto sm = semantic_texture(field, mesh, g.spacing().x(), settings);
  REQUIRE(sm.labels.size() == mesh.vertices.size());
  std::size_t correct = 0;
  for (std::size_t v = 0; v < sm.labels.size(); ++v) {
    correct += sm.labels[v] == 2;
    CHECK(sm.probabilities[v].sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sm.mesh.vertices[v] == mesh.vertices[v]);
  }
  CHECK(double(correct) / double(sm.labels.size()) > 0.99);

  const SphereField empty(0.5, 0.0f);
  const auto flat = semantic_texture(empty, mesh, g.spacing().x(), settings);
  for (const auto& p : flat.probabilities) CHECK(p.isApprox(Eigen::VectorXd::Constant(3, 1.0 / 3.0)));
}
