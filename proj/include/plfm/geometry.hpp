#pragma once

// Torsion angles, inter-residue orientation features, and Kabsch
// superposition. Angles are in radians, signed per the IUPAC convention
// (cis = 0), in (-pi, pi]. Undefined torsions are quiet NaN.

#include <vector>

#include "plfm/common.hpp"
#include "plfm/protein.hpp"

namespace plfm {

// Signed torsion of the chain p1-p2-p3-p4 about the p2-p3 axis.
double dihedral(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p4);

// Angle at b between a and c, in [0, pi].
double planar_angle(const Vec3& a, const Vec3& b, const Vec3& c);

struct BackboneTorsions {
  double phi, psi, omega;  // NaN at chain ends
};

// phi(i) = C(i-1)-N-CA-C, psi(i) = N-CA-C-N(i+1),
// omega(i) = CA(i-1)-C(i-1)-N(i)-CA(i). Residue 0 has no phi/omega, the last
// residue has no psi.
std::vector<BackboneTorsions> backbone_torsions(const ProteinStructure& p);

struct ChiAngles {
  double chi[4];     // NaN where undefined
  bool defined[4];   // defined by the residue type and all four atoms present
};

std::vector<ChiAngles> chi_angles(const ProteinStructure& p);

// The residue's CB, or an ideal virtual CB built from N/CA/C for GLY (and
// for any residue whose CB is absent from the mask).
Vec3 virtual_cb(const ProteinStructure& p, int i);

// trRosetta-style pair orientation: omega = CA(i)-CB(i)-CB(j)-CA(j),
// theta = N(i)-CA(i)-CB(i)-CB(j), phi = planar CA(i)-CB(i)-CB(j).
// Asymmetric in (i, j) except omega. Requires i != j.
struct PairOrientation {
  double omega, theta, phi;
};
PairOrientation relative_orientation(const ProteinStructure& p, int i, int j);

// Optimal superposition of a onto b (proper rotation enforced: det R = +1).
// Needs n >= 3 non-degenerate points; throws TooFewPoints below that.
struct Superposition {
  double rot[3][3];
  Vec3 shift;      // aligned_a = rot * a + shift
  double rmsd;
};
Superposition superpose(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

Vec3 apply_superposition(const Superposition& s, const Vec3& v);

// RMSD between equal-length point sets, optionally after superposition.
// With superpose=false this is the plain coordinate-frame RMSD, no centering.
double kabsch_rmsd(const std::vector<Vec3>& a, const std::vector<Vec3>& b, bool do_superpose);

}  // namespace plfm
