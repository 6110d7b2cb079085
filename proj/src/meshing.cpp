#include "snerf/meshing.hpp"

#include <cmath>
#include <fstream>

#include "snerf/errors.hpp"
#include "snerf/parallel.hpp"

namespace snerf {
namespace {

// Cell corner c has offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
constexpr int corner_offset(int c, int axis) { return (c >> axis) & 1; }

struct CellEdge {
  int a, b;  // corner ids, a < b, differing in exactly one bit
  int axis;
};

std::array<CellEdge, 12> make_edges() {
  std::array<CellEdge, 12> edges{};
  int n = 0;
  for (int a = 0; a < 8; ++a) {
    for (int axis = 0; axis < 3; ++axis) {
      if (!corner_offset(a, axis)) edges[n++] = {a, a | (1 << axis), axis};
    }
  }
  return edges;
}

const std::array<CellEdge, 12> kEdges = make_edges();

int edge_between(int a, int b) {
  if (a > b) std::swap(a, b);
  for (int e = 0; e < 12; ++e) {
    if (kEdges[e].a == a && kEdges[e].b == b) return e;
  }
  return -1;
}

/// The six faces as corner cycles.
std::array<std::array<int, 4>, 6> make_faces() {
  std::array<std::array<int, 4>, 6> faces{};
  int n = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      const int base = side << axis;
      faces[n++] = {base, base | (1 << u), base | (1 << u) | (1 << v), base | (1 << v)};
    }
  }
  return faces;
}

const std::array<std::array<int, 4>, 6> kFaces = make_faces();

/// Loops of crossed edges for every corner configuration. A face with two
/// diagonal inside corners cuts each of them off separately; the rule only
/// looks at the face itself, so neighbouring cells agree.
std::vector<std::vector<int>> cell_loops(unsigned inside) {
  std::vector<std::array<int, 2>> segments;
  for (const auto& f : kFaces) {
    bool in[4];
    for (int i = 0; i < 4; ++i) in[i] = (inside >> f[i]) & 1;
    auto edge = [&](int i) { return edge_between(f[i], f[(i + 1) % 4]); };
    const int crossings = (in[0] != in[1]) + (in[1] != in[2]) + (in[2] != in[3]) + (in[3] != in[0]);
    if (crossings == 2) {
      int ends[2], k = 0;
      for (int i = 0; i < 4; ++i) {
        if (in[i] != in[(i + 1) % 4]) ends[k++] = edge(i);
      }
      segments.push_back({ends[0], ends[1]});
    } else if (crossings == 4) {
      for (int i = 0; i < 4; ++i) {
        if (in[i]) segments.push_back({edge((i + 3) % 4), edge(i)});
      }
    }
  }
  std::vector<std::vector<int>> loops;
  std::vector<bool> used(segments.size(), false);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (used[s]) continue;
    used[s] = true;
    std::vector<int> loop{segments[s][0]};
    int current = segments[s][1];
    while (current != loop.front()) {
      loop.push_back(current);
      for (std::size_t t = 0; t < segments.size(); ++t) {
        if (used[t]) continue;
        if (segments[t][0] == current || segments[t][1] == current) {
          used[t] = true;
          current = segments[t][0] == current ? segments[t][1] : segments[t][0];
          break;
        }
      }
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

const std::vector<std::vector<std::vector<int>>>& loop_table() {
  static const auto table = [] {
    std::vector<std::vector<std::vector<int>>> t(256);
    for (unsigned c = 0; c < 256; ++c) t[c] = cell_loops(c);
    return t;
  }();
  return table;
}

}  // namespace

Vec3 DensityGrid::spacing() const {
  return {(hi.x() - lo.x()) / (size[0] - 1), (hi.y() - lo.y()) / (size[1] - 1), (hi.z() - lo.z()) / (size[2] - 1)};
}

Vec3 DensityGrid::node(int i, int j, int k) const { return lo + spacing().cwiseProduct(Vec3(i, j, k)); }

DensityGrid density_grid(const FieldEvaluator<float>& field, const Vec3& lo, const Vec3& hi, int resolution,
                         int threads) {
  if (resolution < 2) throw ConfigError("density_grid: resolution must be >= 2");
  if (!(hi.array() > lo.array()).all()) throw ConfigError("density_grid: bounds must have positive extent");
  DensityGrid g;
  g.lo = lo;
  g.hi = hi;
  g.size = {resolution, resolution, resolution};
  g.values.resize(std::size_t(resolution) * resolution * resolution);
  const Eigen::Index slice = Eigen::Index(resolution) * resolution;
  parallel_for(std::size_t(resolution), resolve_threads(threads), [&](std::size_t k) {
    Matrix<float> pos(3, slice), dir(3, slice);
    dir.setZero();
    dir.row(2).setConstant(-1.0f);
    for (int j = 0; j < resolution; ++j) {
      for (int i = 0; i < resolution; ++i) pos.col(j * resolution + i) = g.node(i, j, int(k)).cast<float>();
    }
    FieldBatch<float> out;
    field.evaluate(NetworkId::Fine, pos, dir, out);
    for (Eigen::Index n = 0; n < slice; ++n) {
      if (!std::isfinite(out.sigma(n))) throw DomainError("density_grid: non-finite density");
      g.values[k * slice + n] = out.sigma(n);
    }
  });
  return g;
}

Mesh marching_cubes(const DensityGrid& grid, double iso) {
  const auto [nx, ny, nz] = grid.size;
  if (nx < 2 || ny < 2 || nz < 2 || grid.values.size() != std::size_t(nx) * ny * nz) {
    throw DomainError("marching_cubes: malformed grid");
  }
  const Vec3 h = grid.spacing();
  auto gradient = [&](int i, int j, int k) {
    auto diff = [&](int axis) {
      int lo[3] = {i, j, k}, hi[3] = {i, j, k};
      lo[axis] = std::max(0, lo[axis] - 1);
      hi[axis] = std::min(grid.size[axis] - 1, hi[axis] + 1);
      return (double(grid.at(hi[0], hi[1], hi[2])) - double(grid.at(lo[0], lo[1], lo[2]))) /
             (double(hi[axis] - lo[axis]) * h(axis));
    };
    return Vec3(diff(0), diff(1), diff(2));
  };

  Mesh mesh;
  std::vector<int> vertex_of_edge(std::size_t(nx) * ny * nz * 3, -1);
  const auto& table = loop_table();
  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        unsigned config = 0;
        for (int c = 0; c < 8; ++c) {
          const float v = grid.at(i + corner_offset(c, 0), j + corner_offset(c, 1), k + corner_offset(c, 2));
          if (v > iso) config |= 1u << c;
        }
        if (config == 0 || config == 255) continue;
        for (const auto& loop : table[config]) {
          std::vector<int> ids;
          for (int e : loop) {
            const CellEdge& edge = kEdges[e];
            const int ai = i + corner_offset(edge.a, 0), aj = j + corner_offset(edge.a, 1),
                      ak = k + corner_offset(edge.a, 2);
            const std::size_t key = ((std::size_t(ak) * ny + aj) * nx + ai) * 3 + edge.axis;
            if (vertex_of_edge[key] < 0) {
              int bi = ai, bj = aj, bk = ak;
              (edge.axis == 0 ? bi : edge.axis == 1 ? bj : bk) += 1;
              const double va = grid.at(ai, aj, ak), vb = grid.at(bi, bj, bk);
              const double t = (iso - va) / (vb - va);
              vertex_of_edge[key] = int(mesh.vertices.size());
              mesh.vertices.push_back(grid.node(ai, aj, ak) + t * (grid.node(bi, bj, bk) - grid.node(ai, aj, ak)));
              const Vec3 g = (1.0 - t) * gradient(ai, aj, ak) + t * gradient(bi, bj, bk);
              mesh.normals.push_back(-g);
            }
            ids.push_back(vertex_of_edge[key]);
          }
          for (std::size_t f = 1; f + 1 < ids.size(); ++f) {
            Eigen::Vector3i tri(ids[0], ids[f], ids[f + 1]);
            const Vec3 n = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]).cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
            const Vec3 outward = mesh.normals[tri[0]] + mesh.normals[tri[1]] + mesh.normals[tri[2]];
            if (n.dot(outward) < 0.0) std::swap(tri[1], tri[2]);
            mesh.triangles.push_back(tri);
          }
        }
      }
    }
  }
  // Unit normals; a vanishing gradient falls back to the adjacent face normals.
  std::vector<Vec3> face_sum(mesh.vertices.size(), Vec3::Zero());
  for (const auto& t : mesh.triangles) {
    const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    for (int c = 0; c < 3; ++c) face_sum[t[c]] += n;
  }
  for (std::size_t v = 0; v < mesh.normals.size(); ++v) {
    Vec3& n = mesh.normals[v];
    if (n.norm() < 1e-12) n = face_sum[v];
    n = n.norm() > 0.0 ? Vec3(n.normalized()) : Vec3::UnitY();
  }
  return mesh;
}

SemanticMesh semantic_texture(const FieldEvaluator<float>& field, const Mesh& mesh, double voxel_size,
                              const TextureSettings& settings) {
  if (!(voxel_size > 0.0)) throw ConfigError("semantic_texture: voxel size must be > 0");
  SemanticMesh out;
  out.mesh = mesh;
  const std::size_t n = mesh.vertices.size();
  out.labels.resize(n);
  out.probabilities.resize(n);
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, resolve_threads(settings.render.threads), [&](std::size_t c) {
    std::vector<Ray> rays;
    for (std::size_t v = c * kChunk; v < std::min(n, (c + 1) * kChunk); ++v) {
      Ray r;
      r.direction = -mesh.normals[v];
      r.origin = mesh.vertices[v] + settings.offset_voxels * voxel_size * mesh.normals[v];
      r.t_near = 1e-4;
      r.t_far = settings.far_voxels * voxel_size;
      rays.push_back(r);
    }
    const auto rendered = render_rays<float>(field, rays, settings.render, nullptr);
    for (std::size_t i = 0; i < rendered.size(); ++i) {
      out.probabilities[c * kChunk + i] = rendered[i].probabilities;
      out.labels[c * kChunk + i] = rendered[i].label;
    }
  });
  return out;
}

std::array<std::uint8_t, 3> class_color(int class_id) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 12> kPalette{{{128, 128, 128},
                                                                         {152, 223, 138},
                                                                         {31, 119, 180},
                                                                         {255, 127, 14},
                                                                         {214, 39, 40},
                                                                         {148, 103, 189},
                                                                         {140, 86, 75},
                                                                         {227, 119, 194},
                                                                         {188, 189, 34},
                                                                         {23, 190, 207},
                                                                         {174, 199, 232},
                                                                         {255, 187, 120}}};
  return kPalette[std::size_t(class_id) % kPalette.size()];
}

void write_ply(const std::filesystem::path& path, const SemanticMesh& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const auto& mesh = m.mesh;
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property float nx\nproperty float ny\nproperty float nz\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property int label\n"
      << "element face " << mesh.triangles.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const int label = m.labels.empty() ? 0 : m.labels[v];
    const auto rgb = class_color(label);
    const Vec3& p = mesh.vertices[v];
    const Vec3& n = mesh.normals[v];
    out << float(p.x()) << ' ' << float(p.y()) << ' ' << float(p.z()) << ' ' << float(n.x()) << ' ' << float(n.y())
        << ' ' << float(n.z()) << ' ' << int(rgb[0]) << ' ' << int(rgb[1]) << ' ' << int(rgb[2]) << ' ' << label << '\n';
  }
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

}  // namespace snerf
