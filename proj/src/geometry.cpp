#include "plfm/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace plfm {

namespace {
constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();
}

double dihedral(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p4) {
  Vec3 b1 = p2 - p1, b2 = p3 - p2, b3 = p4 - p3;
  Vec3 n1 = cross(b1, b2);
  Vec3 n2 = cross(b2, b3);
  double x = dot(n1, n2);
  double y = dot(cross(n1, n2), normalized(b2));
  double a = std::atan2(y, x);
  // atan2 returns [-pi, pi]; fold the closed lower end onto +pi.
  if (a <= -M_PI) a = M_PI;
  return a;
}

double planar_angle(const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 u = a - b, v = c - b;
  double cosang = dot(u, v) / (norm(u) * norm(v));
  cosang = std::max(-1.0, std::min(1.0, cosang));
  return std::acos(cosang);
}

std::vector<BackboneTorsions> backbone_torsions(const ProteinStructure& p) {
  const int L = p.length();
  std::vector<BackboneTorsions> out(L, {nan_v, nan_v, nan_v});
  for (int i = 0; i < L; ++i) {
    if (i > 0 && p.has_atom(i - 1, slot_C) && p.has_atom(i, slot_N) && p.has_atom(i, slot_CA) &&
        p.has_atom(i, slot_C))
      out[i].phi = dihedral(p.atom(i - 1, slot_C), p.atom(i, slot_N), p.atom(i, slot_CA),
                            p.atom(i, slot_C));
    if (i + 1 < L && p.has_atom(i, slot_N) && p.has_atom(i, slot_CA) && p.has_atom(i, slot_C) &&
        p.has_atom(i + 1, slot_N))
      out[i].psi = dihedral(p.atom(i, slot_N), p.atom(i, slot_CA), p.atom(i, slot_C),
                            p.atom(i + 1, slot_N));
    if (i > 0 && p.has_atom(i - 1, slot_CA) && p.has_atom(i - 1, slot_C) &&
        p.has_atom(i, slot_N) && p.has_atom(i, slot_CA))
      out[i].omega = dihedral(p.atom(i - 1, slot_CA), p.atom(i - 1, slot_C), p.atom(i, slot_N),
                              p.atom(i, slot_CA));
  }
  return out;
}

std::vector<ChiAngles> chi_angles(const ProteinStructure& p) {
  std::vector<ChiAngles> out(p.length());
  for (int i = 0; i < p.length(); ++i) {
    const ChiDefinition& cd = chi_definition(p.seq[i]);
    for (int k = 0; k < 4; ++k) {
      out[i].chi[k] = nan_v;
      out[i].defined[k] = false;
      if (k >= cd.n_chi) continue;
      const int* a = cd.atoms[k];
      if (!p.has_atom(i, a[0]) || !p.has_atom(i, a[1]) || !p.has_atom(i, a[2]) ||
          !p.has_atom(i, a[3]))
        continue;
      out[i].chi[k] = dihedral(p.atom(i, a[0]), p.atom(i, a[1]), p.atom(i, a[2]),
                               p.atom(i, a[3]));
      out[i].defined[k] = true;
    }
  }
  return out;
}

Vec3 virtual_cb(const ProteinStructure& p, int i) {
  if (p.has_atom(i, slot_CB)) return p.atom(i, slot_CB);
  // Ideal tetrahedral CB from the backbone frame (same constants as the toy
  // builder uses for real CBs).
  Vec3 b = p.atom(i, slot_CA) - p.atom(i, slot_N);
  Vec3 c = p.atom(i, slot_C) - p.atom(i, slot_CA);
  Vec3 a = cross(b, c);
  return p.atom(i, slot_CA) + (-0.58273431 * a) + 0.56802827 * b - 0.54067466 * c;
}

PairOrientation relative_orientation(const ProteinStructure& p, int i, int j) {
  if (i == j) throw Error("InvalidArgument", "relative_orientation needs i != j");
  Vec3 cb_i = virtual_cb(p, i), cb_j = virtual_cb(p, j);
  PairOrientation o;
  o.omega = dihedral(p.atom(i, slot_CA), cb_i, cb_j, p.atom(j, slot_CA));
  o.theta = dihedral(p.atom(i, slot_N), p.atom(i, slot_CA), cb_i, cb_j);
  o.phi = planar_angle(p.atom(i, slot_CA), cb_i, cb_j);
  return o;
}

Superposition superpose(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.size() != b.size()) throw Error("InvalidArgument", "point sets differ in size");
  if (a.size() < 3) throw Error("TooFewPoints", "superposition needs at least 3 points");
  const int n = int(a.size());

  Vec3 ca{0, 0, 0}, cb{0, 0, 0};
  for (int i = 0; i < n; ++i) {
    ca = ca + a[i];
    cb = cb + b[i];
  }
  ca = (1.0 / n) * ca;
  cb = (1.0 / n) * cb;

  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d u(a[i][0] - ca[0], a[i][1] - ca[1], a[i][2] - ca[2]);
    Eigen::Vector3d v(b[i][0] - cb[0], b[i][1] - cb[1], b[i][2] - cb[2]);
    H += u * v.transpose();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
  double d = (V * U.transpose()).determinant() < 0 ? -1.0 : 1.0;
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  D(2, 2) = d;  // reflection fix keeps det(R) = +1
  Eigen::Matrix3d R = V * D * U.transpose();

  Superposition s;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) s.rot[r][c] = R(r, c);
  Eigen::Vector3d t = Eigen::Vector3d(cb[0], cb[1], cb[2]) - R * Eigen::Vector3d(ca[0], ca[1], ca[2]);
  s.shift = {t[0], t[1], t[2]};

  double ss = 0;
  for (int i = 0; i < n; ++i) {
    Vec3 w = apply_superposition(s, a[i]) - b[i];
    ss += dot(w, w);
  }
  s.rmsd = std::sqrt(ss / n);
  return s;
}

Vec3 apply_superposition(const Superposition& s, const Vec3& v) {
  Vec3 out;
  for (int r = 0; r < 3; ++r)
    out[r] = s.rot[r][0] * v[0] + s.rot[r][1] * v[1] + s.rot[r][2] * v[2] + s.shift[r];
  return out;
}

double kabsch_rmsd(const std::vector<Vec3>& a, const std::vector<Vec3>& b, bool do_superpose) {
  if (a.size() != b.size()) throw Error("InvalidArgument", "point sets differ in size");
  if (a.empty()) throw Error("TooFewPoints", "rmsd of empty point sets");
  if (do_superpose) return superpose(a, b).rmsd;
  double ss = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    Vec3 w = a[i] - b[i];
    ss += dot(w, w);
  }
  return std::sqrt(ss / double(a.size()));
}

}  // namespace plfm
