#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pdn/errors.hpp"
#include "pdn/rng.hpp"

namespace pdn {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
    double n = norm(a);
    if (n == 0.0) throw ValidationError("cannot normalize a zero vector");
    return a / n;
}

struct Aabb {
    Vec3 lo, hi;
    double diagonal() const { return norm(hi - lo); }
    Vec3 center() const { return (lo + hi) * 0.5; }
};

// --- shape kinds -----------------------------------------------------------

struct Sphere {
    Vec3 center;
    double radius = 1.0;
};

struct BoxShape {
    Vec3 center;
    Vec3 half{1.0, 1.0, 1.0};  // half extents
};

struct Capsule {
    Vec3 a, b;  // segment endpoints
    double radius = 0.5;
};

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int32_t, 3>> faces;
};

using Solid = std::variant<Sphere, BoxShape, Capsule, TriMesh>;

// --- analytic signed distances (negative inside, zero on the boundary) -----

inline double sdf_sphere(const Sphere& s, const Vec3& p) { return norm(p - s.center) - s.radius; }

inline double sdf_box(const BoxShape& s, const Vec3& p) {
    Vec3 d = p - s.center;
    Vec3 q{std::abs(d.x) - s.half.x, std::abs(d.y) - s.half.y, std::abs(d.z) - s.half.z};
    Vec3 outside{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    double inside = std::min(std::max({q.x, q.y, q.z}), 0.0);
    return norm(outside) + inside;
}

inline double sdf_capsule(const Capsule& s, const Vec3& p) {
    Vec3 pa = p - s.a, ba = s.b - s.a;
    double denom = dot(ba, ba);
    double h = denom > 0.0 ? std::clamp(dot(pa, ba) / denom, 0.0, 1.0) : 0.0;
    return norm(pa - ba * h) - s.radius;
}

// --- triangle mesh machinery ------------------------------------------------

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    Vec3 bp = p - b;
    double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));

    Vec3 cp = p - c;
    double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));

    double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    double denom = 1.0 / (va + vb + vc);
    double v = vb * denom, w = vc * denom;
    return a + ab * v + ac * w;
}

inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    return norm(p - closest_point_on_triangle(p, a, b, c));
}

// Generalized winding number: sum of signed solid angles over all faces,
// normalized by 4*pi. ~1 inside a closed outward-oriented mesh, ~0 outside.
inline double winding_number(const TriMesh& mesh, const Vec3& p) {
    double total = 0.0;
    for (const auto& f : mesh.faces) {
        Vec3 a = mesh.vertices[static_cast<size_t>(f[0])] - p;
        Vec3 b = mesh.vertices[static_cast<size_t>(f[1])] - p;
        Vec3 c = mesh.vertices[static_cast<size_t>(f[2])] - p;
        double la = norm(a), lb = norm(b), lc = norm(c);
        double numer = dot(a, cross(b, c));
        double denom = la * lb * lc + dot(a, b) * lc + dot(b, c) * la + dot(c, a) * lb;
        total += 2.0 * std::atan2(numer, denom);  // van Oosterom-Strackee
    }
    return total / (4.0 * std::numbers::pi);
}

// Every directed edge must appear exactly once and its reverse exactly once
// (closed, consistently oriented, two faces per undirected edge).
inline void validate_closed(const TriMesh& mesh) {
    const auto nv = static_cast<int32_t>(mesh.vertices.size());
    std::map<std::pair<int32_t, int32_t>, int> count;
    for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
        const auto& f = mesh.faces[fi];
        for (int k = 0; k < 3; ++k) {
            int32_t u = f[static_cast<size_t>(k)], v = f[static_cast<size_t>((k + 1) % 3)];
            if (u < 0 || u >= nv || v < 0 || v >= nv)
                throw TopologyError("mesh face " + std::to_string(fi) +
                                    " references vertex out of range");
            if (u == v) throw TopologyError("mesh face " + std::to_string(fi) + " is degenerate");
            if (++count[{u, v}] > 1)
                throw TopologyError("mesh edge (" + std::to_string(u) + "," + std::to_string(v) +
                                    ") appears in more than one face with the same orientation");
        }
    }
    for (const auto& [edge, n] : count) {
        if (!count.count({edge.second, edge.first}))
            throw TopologyError("mesh is not closed: edge (" + std::to_string(edge.first) + "," +
                                std::to_string(edge.second) + ") has no partner");
    }
}

inline double sdf_mesh(const TriMesh& mesh, const Vec3& p) {
    if (mesh.faces.empty()) throw TopologyError("mesh has no faces");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& f : mesh.faces) {
        double d = point_triangle_distance(p, mesh.vertices[static_cast<size_t>(f[0])],
                                           mesh.vertices[static_cast<size_t>(f[1])],
                                           mesh.vertices[static_cast<size_t>(f[2])]);
        best = std::min(best, d);
    }
    const bool inside = winding_number(mesh, p) >= 0.5;
    return inside ? -best : best;
}

// --- dispatch ----------------------------------------------------------------

inline double sdf(const Solid& shape, const Vec3& p) {
    return std::visit(
        [&](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) return sdf_sphere(s, p);
            else if constexpr (std::is_same_v<T, BoxShape>) return sdf_box(s, p);
            else if constexpr (std::is_same_v<T, Capsule>) return sdf_capsule(s, p);
            else return sdf_mesh(s, p);
        },
        shape);
}

inline Aabb bounding_box(const Solid& shape) {
    return std::visit(
        [](const auto& s) -> Aabb {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) {
                Vec3 r{s.radius, s.radius, s.radius};
                return {s.center - r, s.center + r};
            } else if constexpr (std::is_same_v<T, BoxShape>) {
                return {s.center - s.half, s.center + s.half};
            } else if constexpr (std::is_same_v<T, Capsule>) {
                Vec3 lo{std::min(s.a.x, s.b.x) - s.radius, std::min(s.a.y, s.b.y) - s.radius,
                        std::min(s.a.z, s.b.z) - s.radius};
                Vec3 hi{std::max(s.a.x, s.b.x) + s.radius, std::max(s.a.y, s.b.y) + s.radius,
                        std::max(s.a.z, s.b.z) + s.radius};
                return {lo, hi};
            } else {
                if (s.vertices.empty()) throw TopologyError("mesh has no vertices");
                Aabb box{s.vertices[0], s.vertices[0]};
                for (const auto& v : s.vertices) {
                    box.lo.x = std::min(box.lo.x, v.x);
                    box.lo.y = std::min(box.lo.y, v.y);
                    box.lo.z = std::min(box.lo.z, v.z);
                    box.hi.x = std::max(box.hi.x, v.x);
                    box.hi.y = std::max(box.hi.y, v.y);
                    box.hi.z = std::max(box.hi.z, v.z);
                }
                return box;
            }
        },
        shape);
}

inline Vec3 solid_center(const Solid& shape) {
    return std::visit(
        [](const auto& s) -> Vec3 {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) return s.center;
            else if constexpr (std::is_same_v<T, BoxShape>) return s.center;
            else if constexpr (std::is_same_v<T, Capsule>) return (s.a + s.b) * 0.5;
            else {
                Aabb box = bounding_box(Solid{s});
                return box.center();
            }
        },
        shape);
}

// --- sampling ----------------------------------------------------------------

struct PointSet {
    std::vector<Vec3> coords;
    std::vector<double> sdf;
};

// Rejection sampling from the bounding box; accepted points have sdf <= 0.
inline PointSet sample_volume(const Solid& shape, int64_t n, uint64_t seed) {
    if (n < 1) throw ValidationError("sample_volume: need n >= 1");
    Aabb box = bounding_box(shape);
    Rng rng(seed);
    PointSet out;
    out.coords.reserve(static_cast<size_t>(n));
    out.sdf.reserve(static_cast<size_t>(n));
    int64_t proposals = 0;
    while (static_cast<int64_t>(out.coords.size()) < n) {
        Vec3 p{rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
               rng.uniform(box.lo.z, box.hi.z)};
        ++proposals;
        double d = sdf(shape, p);
        if (d <= 0.0) {
            out.coords.push_back(p);
            out.sdf.push_back(d);
        }
        if (proposals >= 1000000 &&
            static_cast<double>(out.coords.size()) / static_cast<double>(proposals) < 1e-4)
            throw DegenerateShapeError("sample_volume: acceptance rate below 1e-4 after " +
                                       std::to_string(proposals) + " proposals");
    }
    return out;
}

// Fixed-size resampling of node indices. M >= N draws N distinct indices
// uniformly without replacement; M < N includes every index once and fills
// the remainder uniformly with replacement, then shuffles.
inline std::vector<int64_t> resample_fixed(int64_t node_count, int64_t target, uint64_t seed) {
    if (node_count < 1 || target < 1)
        throw ValidationError("resample_fixed: node count and target must be >= 1");
    Rng rng(seed);
    std::vector<int64_t> out;
    if (node_count >= target) {
        // partial Fisher-Yates: first `target` entries of a random permutation
        std::vector<int64_t> idx(static_cast<size_t>(node_count));
        std::iota(idx.begin(), idx.end(), 0);
        for (int64_t i = 0; i < target; ++i) {
            int64_t j = rng.uniform_int(i, node_count - 1);
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        }
        out.assign(idx.begin(), idx.begin() + target);
    } else {
        out.resize(static_cast<size_t>(target));
        std::iota(out.begin(), out.begin() + node_count, 0);
        for (int64_t i = node_count; i < target; ++i)
            out[static_cast<size_t>(i)] = rng.uniform_int(0, node_count - 1);
        rng.shuffle(out);
    }
    return out;
}

// --- mesh construction & ingestion --------------------------------------------

// Axis-aligned box as 12 outward-oriented triangles.
inline TriMesh make_box_mesh(const Vec3& center, const Vec3& half) {
    TriMesh m;
    for (int i = 0; i < 8; ++i)
        m.vertices.push_back({center.x + ((i & 1) ? half.x : -half.x),
                              center.y + ((i & 2) ? half.y : -half.y),
                              center.z + ((i & 4) ? half.z : -half.z)});
    auto quad = [&](int a, int b, int c, int d) {
        m.faces.push_back({static_cast<int32_t>(a), static_cast<int32_t>(b), static_cast<int32_t>(c)});
        m.faces.push_back({static_cast<int32_t>(a), static_cast<int32_t>(c), static_cast<int32_t>(d)});
    };
    quad(0, 4, 6, 2);  // x = -hx
    quad(1, 3, 7, 5);  // x = +hx
    quad(0, 1, 5, 4);  // y = -hy
    quad(2, 6, 7, 3);  // y = +hy
    quad(0, 2, 3, 1);  // z = -hz
    quad(4, 5, 7, 6);  // z = +hz
    return m;
}

// Icosphere: subdivided icosahedron with vertices projected to the radius.
inline TriMesh make_icosphere(int subdivisions, double radius = 1.0, const Vec3& center = {}) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                               {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                               {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : verts) v = normalized(v);
    std::vector<std::array<int32_t, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
        {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int32_t, int32_t>, int32_t> midpoint;
        auto mid = [&](int32_t a, int32_t b) -> int32_t {
            auto key = std::minmax(a, b);
            auto it = midpoint.find({key.first, key.second});
            if (it != midpoint.end()) return it->second;
            Vec3 v = normalized((verts[static_cast<size_t>(a)] + verts[static_cast<size_t>(b)]) * 0.5);
            verts.push_back(v);
            int32_t id = static_cast<int32_t>(verts.size() - 1);
            midpoint[{key.first, key.second}] = id;
            return id;
        };
        std::vector<std::array<int32_t, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            int32_t ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }
    TriMesh m;
    m.vertices.reserve(verts.size());
    for (const auto& v : verts) m.vertices.push_back(center + v * radius);
    m.faces = std::move(faces);
    return m;
}

// ASCII OBJ subset: `v x y z` and triangular `f` records (indices may carry
// /vt/vn suffixes, which are ignored). Negative indices are relative.
inline TriMesh load_obj(std::istream& in) {
    TriMesh mesh;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z))
                throw FormatError("obj line " + std::to_string(lineno) + ": malformed vertex");
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int32_t> idx;
            std::string tok;
            while (ls >> tok) {
                size_t slash = tok.find('/');
                std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
                long v = 0;
                try {
                    v = std::stol(head);
                } catch (...) {
                    throw FormatError("obj line " + std::to_string(lineno) +
                                      ": malformed face index '" + tok + "'");
                }
                if (v < 0) v = static_cast<long>(mesh.vertices.size()) + v + 1;
                if (v < 1 || v > static_cast<long>(mesh.vertices.size()))
                    throw FormatError("obj line " + std::to_string(lineno) +
                                      ": face index out of range");
                idx.push_back(static_cast<int32_t>(v - 1));
            }
            if (idx.size() != 3)
                throw FormatError("obj line " + std::to_string(lineno) +
                                  ": only triangular faces are supported");
            mesh.faces.push_back({idx[0], idx[1], idx[2]});
        }
        // other records (vn, vt, o, g, comments) are ignored
    }
    if (mesh.faces.empty()) throw FormatError("obj: no faces found");
    return mesh;
}

// Ingestion boundary: parsed meshes are checked for closedness here, so
// downstream SDF queries can assume a valid surface.
inline TriMesh load_obj_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open OBJ file '" + path + "'");
    TriMesh mesh = load_obj(in);
    validate_closed(mesh);
    return mesh;
}

}  // namespace pdn
