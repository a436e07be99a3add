#include "plfm/protein.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace plfm {

const char* const atom37_names[num_atom_slots] = {
    "N",   "CA",  "C",   "CB",  "O",   "CG",  "CG1", "CG2", "OG",  "OG1",
    "SG",  "CD",  "CD1", "CD2", "ND1", "ND2", "OD1", "OD2", "SD",  "CE",
    "CE1", "CE2", "CE3", "NE",  "NE1", "NE2", "OE1", "OE2", "CH2", "NH1",
    "NH2", "OH",  "CZ",  "CZ2", "CZ3", "NZ",  "OXT"};

namespace {

constexpr int slot_CG = 5, slot_CG1 = 6, slot_CG2 = 7, slot_OG = 8, slot_OG1 = 9,
              slot_SG = 10, slot_CD = 11, slot_CD1 = 12, slot_CD2 = 13, slot_ND1 = 14,
              slot_ND2 = 15, slot_OD1 = 16, slot_OD2 = 17, slot_SD = 18, slot_CE = 19,
              slot_CE1 = 20, slot_CE2 = 21, slot_CE3 = 22, slot_NE = 23, slot_NE1 = 24,
              slot_NE2 = 25, slot_OE1 = 26, slot_OE2 = 27, slot_CH2 = 28, slot_NH1 = 29,
              slot_NH2 = 30, slot_OH = 31, slot_CZ = 32, slot_CZ2 = 33, slot_CZ3 = 34,
              slot_NZ = 35;

const char* const three_letter[num_residue_types] = {
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL"};

const char one_letter[num_residue_types + 1] = "ARNDCQEGHILKMFPSTWYV";

const std::vector<int> atoms_by_type[num_residue_types] = {
    /* ALA */ {0, 1, 2, 3, 4},
    /* ARG */ {0, 1, 2, 3, 4, slot_CG, slot_CD, slot_NE, slot_NH1, slot_NH2, slot_CZ},
    /* ASN */ {0, 1, 2, 3, 4, slot_CG, slot_ND2, slot_OD1},
    /* ASP */ {0, 1, 2, 3, 4, slot_CG, slot_OD1, slot_OD2},
    /* CYS */ {0, 1, 2, 3, 4, slot_SG},
    /* GLN */ {0, 1, 2, 3, 4, slot_CG, slot_CD, slot_NE2, slot_OE1},
    /* GLU */ {0, 1, 2, 3, 4, slot_CG, slot_CD, slot_OE1, slot_OE2},
    /* GLY */ {0, 1, 2, 4},
    /* HIS */ {0, 1, 2, 3, 4, slot_CG, slot_CD2, slot_ND1, slot_CE1, slot_NE2},
    /* ILE */ {0, 1, 2, 3, 4, slot_CG1, slot_CG2, slot_CD1},
    /* LEU */ {0, 1, 2, 3, 4, slot_CG, slot_CD1, slot_CD2},
    /* LYS */ {0, 1, 2, 3, 4, slot_CG, slot_CD, slot_CE, slot_NZ},
    /* MET */ {0, 1, 2, 3, 4, slot_CG, slot_SD, slot_CE},
    /* PHE */ {0, 1, 2, 3, 4, slot_CG, slot_CD1, slot_CD2, slot_CE1, slot_CE2, slot_CZ},
    /* PRO */ {0, 1, 2, 3, 4, slot_CG, slot_CD},
    /* SER */ {0, 1, 2, 3, 4, slot_OG},
    /* THR */ {0, 1, 2, 3, 4, slot_CG2, slot_OG1},
    /* TRP */ {0, 1, 2, 3, 4, slot_CG, slot_CD1, slot_CD2, slot_CE2, slot_CE3,
               slot_NE1, slot_CH2, slot_CZ2, slot_CZ3},
    /* TYR */ {0, 1, 2, 3, 4, slot_CG, slot_CD1, slot_CD2, slot_CE1, slot_CE2,
               slot_OH, slot_CZ},
    /* VAL */ {0, 1, 2, 3, 4, slot_CG1, slot_CG2},
};

const ChiDefinition chi_by_type[num_residue_types] = {
    /* ALA */ {0, {}},
    /* ARG */ {4, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_CD}, {3, slot_CG, slot_CD, slot_NE}, {slot_CG, slot_CD, slot_NE, slot_CZ}}},
    /* ASN */ {2, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_OD1}, {}, {}}},
    /* ASP */ {2, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_OD1}, {}, {}}},
    /* CYS */ {1, {{0, 1, 3, slot_SG}, {}, {}, {}}},
    /* GLN */ {3, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_CD}, {3, slot_CG, slot_CD, slot_OE1}, {}}},
    /* GLU */ {3, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_CD}, {3, slot_CG, slot_CD, slot_OE1}, {}}},
    /* GLY */ {0, {}},
    /* HIS */ {2, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_ND1}, {}, {}}},
    /* ILE */ {2, {{0, 1, 3, slot_CG1}, {1, 3, slot_CG1, slot_CD1}, {}, {}}},
    /* LEU */ {2, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_CD1}, {}, {}}},
    /* LYS */ {4, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_CD}, {3, slot_CG, slot_CD, slot_CE}, {slot_CG, slot_CD, slot_CE, slot_NZ}}},
    /* MET */ {3, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_SD}, {3, slot_CG, slot_SD, slot_CE}, {}}},
    /* PHE */ {2, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_CD1}, {}, {}}},
    /* PRO */ {2, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_CD}, {}, {}}},
    /* SER */ {1, {{0, 1, 3, slot_OG}, {}, {}, {}}},
    /* THR */ {1, {{0, 1, 3, slot_OG1}, {}, {}, {}}},
    /* TRP */ {2, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_CD1}, {}, {}}},
    /* TYR */ {2, {{0, 1, 3, slot_CG}, {1, 3, slot_CG, slot_CD1}, {}, {}}},
    /* VAL */ {1, {{0, 1, 3, slot_CG1}, {}, {}, {}}},
};

const std::vector<int> tips_by_type[num_residue_types] = {
    /* ALA */ {1, 3},
    /* ARG */ {slot_CD, slot_NE, slot_NH1, slot_NH2, slot_CZ},
    /* ASN */ {3, slot_CG, slot_ND2, slot_OD1},
    /* ASP */ {3, slot_CG, slot_OD1, slot_OD2},
    /* CYS */ {1, 3, slot_SG},
    /* GLN */ {slot_CG, slot_CD, slot_NE2, slot_OE1},
    /* GLU */ {slot_CG, slot_CD, slot_OE1, slot_OE2},
    /* GLY */ {},
    /* HIS */ {3, slot_CG, slot_CD2, slot_ND1, slot_CE1, slot_NE2},
    /* ILE */ {3, slot_CG1, slot_CG2, slot_CD1},
    /* LEU */ {3, slot_CG, slot_CD1, slot_CD2},
    /* LYS */ {slot_CE, slot_NZ},
    /* MET */ {slot_CG, slot_SD, slot_CE},
    /* PHE */ {3, slot_CG, slot_CD1, slot_CD2, slot_CE1, slot_CE2, slot_CZ},
    /* PRO */ {0, 1, 3, slot_CG, slot_CD},
    /* SER */ {1, 3, slot_OG},
    /* THR */ {1, 3, slot_CG2, slot_OG1},
    /* TRP */ {3, slot_CG, slot_CD1, slot_CD2, slot_CE2, slot_CE3, slot_NE1, slot_CH2, slot_CZ2, slot_CZ3},
    /* TYR */ {3, slot_CG, slot_CD1, slot_CD2, slot_CE1, slot_CE2, slot_OH, slot_CZ},
    /* VAL */ {3, slot_CG1, slot_CG2},
};

// Backbone bonds shared by all types; CA-CB added for non-GLY below.
const std::vector<std::pair<int, int>> backbone_bonds = {{0, 1}, {1, 2}, {2, 4}};

std::vector<std::pair<int, int>> with_backbone(ResidueType t,
                                               std::vector<std::pair<int, int>> side) {
  std::vector<std::pair<int, int>> out = backbone_bonds;
  if (t != ResidueType::GLY) out.push_back({1, 3});
  out.insert(out.end(), side.begin(), side.end());
  return out;
}

const std::vector<std::pair<int, int>> bonds_by_type[num_residue_types] = {
    with_backbone(ResidueType::ALA, {}),
    with_backbone(ResidueType::ARG, {{3, slot_CG}, {slot_CG, slot_CD}, {slot_CD, slot_NE}, {slot_NE, slot_CZ}, {slot_CZ, slot_NH1}, {slot_CZ, slot_NH2}}),
    with_backbone(ResidueType::ASN, {{3, slot_CG}, {slot_CG, slot_OD1}, {slot_CG, slot_ND2}}),
    with_backbone(ResidueType::ASP, {{3, slot_CG}, {slot_CG, slot_OD1}, {slot_CG, slot_OD2}}),
    with_backbone(ResidueType::CYS, {{3, slot_SG}}),
    with_backbone(ResidueType::GLN, {{3, slot_CG}, {slot_CG, slot_CD}, {slot_CD, slot_OE1}, {slot_CD, slot_NE2}}),
    with_backbone(ResidueType::GLU, {{3, slot_CG}, {slot_CG, slot_CD}, {slot_CD, slot_OE1}, {slot_CD, slot_OE2}}),
    with_backbone(ResidueType::GLY, {}),
    with_backbone(ResidueType::HIS, {{3, slot_CG}, {slot_CG, slot_ND1}, {slot_CG, slot_CD2}, {slot_ND1, slot_CE1}, {slot_CD2, slot_NE2}, {slot_CE1, slot_NE2}}),
    with_backbone(ResidueType::ILE, {{3, slot_CG1}, {3, slot_CG2}, {slot_CG1, slot_CD1}}),
    with_backbone(ResidueType::LEU, {{3, slot_CG}, {slot_CG, slot_CD1}, {slot_CG, slot_CD2}}),
    with_backbone(ResidueType::LYS, {{3, slot_CG}, {slot_CG, slot_CD}, {slot_CD, slot_CE}, {slot_CE, slot_NZ}}),
    with_backbone(ResidueType::MET, {{3, slot_CG}, {slot_CG, slot_SD}, {slot_SD, slot_CE}}),
    with_backbone(ResidueType::PHE, {{3, slot_CG}, {slot_CG, slot_CD1}, {slot_CG, slot_CD2}, {slot_CD1, slot_CE1}, {slot_CD2, slot_CE2}, {slot_CE1, slot_CZ}, {slot_CE2, slot_CZ}}),
    with_backbone(ResidueType::PRO, {{3, slot_CG}, {slot_CG, slot_CD}, {slot_CD, 0}}),
    with_backbone(ResidueType::SER, {{3, slot_OG}}),
    with_backbone(ResidueType::THR, {{3, slot_OG1}, {3, slot_CG2}}),
    with_backbone(ResidueType::TRP, {{3, slot_CG}, {slot_CG, slot_CD1}, {slot_CG, slot_CD2}, {slot_CD1, slot_NE1}, {slot_NE1, slot_CE2}, {slot_CD2, slot_CE2}, {slot_CD2, slot_CE3}, {slot_CE2, slot_CZ2}, {slot_CE3, slot_CZ3}, {slot_CZ2, slot_CH2}, {slot_CZ3, slot_CH2}}),
    with_backbone(ResidueType::TYR, {{3, slot_CG}, {slot_CG, slot_CD1}, {slot_CG, slot_CD2}, {slot_CD1, slot_CE1}, {slot_CD2, slot_CE2}, {slot_CE1, slot_CZ}, {slot_CE2, slot_CZ}, {slot_CZ, slot_OH}}),
    with_backbone(ResidueType::VAL, {{3, slot_CG1}, {3, slot_CG2}}),
};

}  // namespace

int atom37_index(const std::string& name) {
  for (int i = 0; i < num_atom_slots; ++i)
    if (name == atom37_names[i]) return i;
  return -1;
}

ResidueType residue_from_three(const std::string& code) {
  for (int i = 0; i < num_residue_types; ++i)
    if (code == three_letter[i]) return ResidueType(i);
  throw Error("UnknownResidue", "not a canonical residue: '" + code + "'");
}

ResidueType residue_from_one(char c) {
  for (int i = 0; i < num_residue_types; ++i)
    if (c == one_letter[i]) return ResidueType(i);
  throw Error("UnknownResidue", std::string("not a canonical residue: '") + c + "'");
}

const char* residue_three(ResidueType t) { return three_letter[int(t)]; }
char residue_one(ResidueType t) { return one_letter[int(t)]; }

const std::vector<int>& residue_atoms(ResidueType t) { return atoms_by_type[int(t)]; }
int residue_atom_count(ResidueType t) { return int(atoms_by_type[int(t)].size()); }

bool residue_has_atom(ResidueType t, int slot) {
  for (int s : atoms_by_type[int(t)])
    if (s == slot) return true;
  return false;
}

const ChiDefinition& chi_definition(ResidueType t) { return chi_by_type[int(t)]; }
const std::vector<int>& tip_atoms(ResidueType t) { return tips_by_type[int(t)]; }
const std::vector<std::pair<int, int>>& residue_bonds(ResidueType t) { return bonds_by_type[int(t)]; }

double slot_vdw_radius(int slot) {
  switch (atom37_names[slot][0]) {
    case 'N': return 1.55;
    case 'C': return 1.70;
    case 'O': return 1.52;
    case 'S': return 1.80;
  }
  return 1.70;
}

ProteinStructure ProteinStructure::empty(int length) {
  ProteinStructure p;
  p.seq.assign(length, ResidueType::ALA);
  p.xyz.assign(size_t(length) * num_atom_slots, Vec3{0, 0, 0});
  p.mask.assign(size_t(length) * num_atom_slots, 0);
  p.b_factor.assign(length, 100.0);
  return p;
}

std::string ProteinStructure::sequence_one_letter() const {
  std::string s;
  s.reserve(seq.size());
  for (ResidueType t : seq) s.push_back(residue_one(t));
  return s;
}

void validate(const ProteinStructure& p) {
  const int L = p.length();
  if (int(p.xyz.size()) != L * num_atom_slots || int(p.mask.size()) != L * num_atom_slots ||
      int(p.b_factor.size()) != L)
    throw Error("InvalidStructure", "array sizes disagree with length");
  for (int i = 0; i < L; ++i) {
    if (!p.has_atom(i, slot_CA))
      throw Error("InvalidStructure", "residue " + std::to_string(i) + " has no CA");
    for (int s = 0; s < num_atom_slots; ++s) {
      const Vec3& v = p.atom(i, s);
      if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2]))
        throw Error("InvalidStructure", "non-finite coordinate");
      if (p.has_atom(i, s)) {
        if (!residue_has_atom(p.seq[i], s))
          throw Error("InvalidStructure", std::string("atom ") + atom37_names[s] +
                                              " not defined for " + residue_three(p.seq[i]));
      } else if (v[0] != 0.0 || v[1] != 0.0 || v[2] != 0.0) {
        throw Error("InvalidStructure", "masked-out coordinate is nonzero");
      }
    }
  }
}

bool is_complete(const ProteinStructure& p) {
  for (int i = 0; i < p.length(); ++i)
    for (int s : residue_atoms(p.seq[i]))
      if (!p.has_atom(i, s)) return false;
  return true;
}

ProteinStructure centered(const ProteinStructure& p) {
  ProteinStructure out = p;
  Vec3 c{0, 0, 0};
  for (int i = 0; i < p.length(); ++i) c = c + p.atom(i, slot_CA);
  c = (1.0 / std::max(1, p.length())) * c;
  for (int i = 0; i < p.length(); ++i)
    for (int s = 0; s < num_atom_slots; ++s)
      if (p.has_atom(i, s)) out.atom(i, s) = p.atom(i, s) - c;
  return out;
}

namespace {

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_coord(const std::string& line, size_t col, size_t width, int lineno) {
  std::string f = strip(line.substr(col, width));
  try {
    size_t used = 0;
    double v = std::stod(f, &used);
    if (used != f.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw Error("MalformedRecord",
                "bad numeric field '" + f + "' on line " + std::to_string(lineno));
  }
}

}  // namespace

std::vector<ParsedChain> parse_pdb_all_chains(const std::string& text) {
  struct RawResidue {
    ResidueType type;
    int resseq;
    std::vector<std::pair<int, Vec3>> atoms;
    double b = 100.0;
  };
  struct RawChain {
    char id;
    bool closed = false;  // a TER record ends the chain
    std::vector<RawResidue> residues;
  };
  std::vector<RawChain> chains;
  auto chain_for = [&](char id) -> RawChain* {
    for (auto& c : chains)
      if (c.id == id) return &c;
    chains.push_back(RawChain{id, false, {}});
    return &chains.back();
  };

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  char last_chain = 0;
  bool any_atom = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("ENDMDL", 0) == 0 || line.rfind("END", 0) == 0) break;
    if (line.rfind("TER", 0) == 0 && any_atom) {
      chain_for(last_chain)->closed = true;
      continue;
    }
    if (line.rfind("ATOM", 0) != 0) continue;
    if (line.size() < 54)
      throw Error("MalformedRecord", "short ATOM record on line " + std::to_string(lineno));

    char alt = line[16];
    if (alt != ' ' && alt != 'A') continue;
    RawChain* chain = chain_for(line[21]);
    if (chain->closed) continue;
    last_chain = line[21];
    any_atom = true;

    std::string name = strip(line.substr(12, 4));
    std::string resname = strip(line.substr(17, 3));
    ResidueType type = residue_from_three(resname);

    int resseq;
    try {
      resseq = std::stoi(strip(line.substr(22, 4)));
    } catch (const std::exception&) {
      throw Error("MalformedRecord", "bad residue number on line " + std::to_string(lineno));
    }

    Vec3 pos{parse_coord(line, 30, 8, lineno), parse_coord(line, 38, 8, lineno),
             parse_coord(line, 46, 8, lineno)};

    auto& residues = chain->residues;
    if (residues.empty() || residues.back().resseq != resseq) {
      residues.push_back(RawResidue{type, resseq, {}, 100.0});
    } else if (residues.back().type != type) {
      throw Error("MalformedRecord",
                  "residue " + std::to_string(resseq) + " changes type mid-record");
    }

    int slot = atom37_index(name);
    if (slot < 0 || slot == 36 || !residue_has_atom(type, slot)) continue;  // OXT, H, etc.
    residues.back().atoms.push_back({slot, pos});

    if (slot == slot_CA && line.size() >= 66) {
      std::string bf = strip(line.substr(60, 6));
      if (!bf.empty()) residues.back().b = parse_coord(line, 60, 6, lineno);
    }
  }

  std::vector<ParsedChain> out;
  for (const auto& chain : chains) {
    if (chain.residues.empty()) continue;
    ParsedChain pc;
    pc.chain = chain.id;
    pc.structure = ProteinStructure::empty(int(chain.residues.size()));
    for (size_t i = 0; i < chain.residues.size(); ++i) {
      const auto& r = chain.residues[i];
      pc.structure.seq[i] = r.type;
      pc.structure.b_factor[i] = r.b;
      pc.resnum.push_back(r.resseq);
      for (auto& [slot, pos] : r.atoms) pc.structure.set_atom(int(i), slot, pos);
      if (!pc.structure.has_atom(int(i), slot_CA))
        throw Error("MissingCA", "residue " + std::to_string(r.resseq) + " has no CA");
    }
    validate(pc.structure);
    out.push_back(std::move(pc));
  }
  if (out.empty()) throw Error("MalformedRecord", "no ATOM records found");
  return out;
}

ProteinStructure parse_pdb(const std::string& text) {
  return parse_pdb_all_chains(text)[0].structure;
}

ProteinStructure parse_pdb_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("MalformedRecord", "cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_pdb(ss.str());
}

std::string write_pdb(const ProteinStructure& p) {
  std::string out;
  char buf[96];
  int serial = 1;
  for (int i = 0; i < p.length(); ++i) {
    for (int s : residue_atoms(p.seq[i])) {
      if (!p.has_atom(i, s)) continue;
      const Vec3& v = p.atom(i, s);
      char elem[3] = {' ', atom37_names[s][0], 0};
      std::snprintf(buf, sizeof(buf),
                    "ATOM  %5d  %-3s %3s %c%4d    %8.3f%8.3f%8.3f%6.2f%6.2f          %2s\n",
                    serial++, atom37_names[s], residue_three(p.seq[i]), 'A', i + 1, v[0], v[1],
                    v[2], 1.00, p.b_factor[i], elem);
      out += buf;
    }
  }
  std::snprintf(buf, sizeof(buf), "TER   %5d      %3s %c%4d\n", serial,
                residue_three(p.seq[p.length() - 1]), 'A', p.length());
  out += buf;
  out += "END\n";
  return out;
}

void write_pdb_file(const ProteinStructure& p, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("MalformedRecord", "cannot open " + path + " for writing");
  f << write_pdb(p);
}

namespace {

constexpr double deg = M_PI / 180.0;

// Place a new atom at the given bond length from c, bond angle b-c-new, and
// dihedral a-b-c-new (the NeRF construction).
Vec3 place_atom(const Vec3& a, const Vec3& b, const Vec3& c, double bond, double angle,
                double torsion) {
  Vec3 bc = normalized(c - b);
  Vec3 n = normalized(cross(b - a, bc));
  Vec3 m = cross(n, bc);
  double x = -bond * std::cos(angle);
  double y = bond * std::cos(torsion) * std::sin(angle);
  double z = bond * std::sin(torsion) * std::sin(angle);
  return c + x * bc + y * m + z * n;
}

// Idealized CB from the backbone frame (also used for GLY virtual CBs in the
// geometry module, so keep the constants in one place).
Vec3 ideal_cb(const Vec3& n, const Vec3& ca, const Vec3& c) {
  Vec3 b = ca - n;
  Vec3 cc = c - ca;
  Vec3 a = cross(b, cc);
  return ca + (-0.58273431 * a) + 0.56802827 * b - 0.54067466 * cc;
}

// One side-chain atom: dihedral(ref_a, ref_b, ref_c, slot) equals either the
// residue's chi[chi_index] plus offset, or just the fixed offset (ring atoms).
struct SideChainStep {
  int slot, a, b, c;
  double bond, angle_deg;
  int chi_index;  // -1 for fixed torsions
  double offset_deg;
};

const std::vector<SideChainStep> recipe_by_type[num_residue_types] = {
    /* ALA */ {},
    /* ARG */
    {{slot_CG, 0, 1, 3, 1.520, 113.8, 0, 0},
     {slot_CD, 1, 3, slot_CG, 1.520, 111.3, 1, 0},
     {slot_NE, 3, slot_CG, slot_CD, 1.460, 112.0, 2, 0},
     {slot_CZ, slot_CG, slot_CD, slot_NE, 1.330, 124.2, 3, 0},
     {slot_NH1, slot_CD, slot_NE, slot_CZ, 1.326, 120.3, -1, 0},
     {slot_NH2, slot_CD, slot_NE, slot_CZ, 1.326, 119.7, -1, 180}},
    /* ASN */
    {{slot_CG, 0, 1, 3, 1.516, 113.0, 0, 0},
     {slot_OD1, 1, 3, slot_CG, 1.231, 120.8, 1, 0},
     {slot_ND2, 1, 3, slot_CG, 1.328, 116.4, 1, 180}},
    /* ASP */
    {{slot_CG, 0, 1, 3, 1.516, 113.0, 0, 0},
     {slot_OD1, 1, 3, slot_CG, 1.249, 119.2, 1, 0},
     {slot_OD2, 1, 3, slot_CG, 1.249, 118.3, 1, 180}},
    /* CYS */ {{slot_SG, 0, 1, 3, 1.808, 114.4, 0, 0}},
    /* GLN */
    {{slot_CG, 0, 1, 3, 1.520, 114.1, 0, 0},
     {slot_CD, 1, 3, slot_CG, 1.516, 112.6, 1, 0},
     {slot_OE1, 3, slot_CG, slot_CD, 1.231, 120.8, 2, 0},
     {slot_NE2, 3, slot_CG, slot_CD, 1.328, 116.4, 2, 180}},
    /* GLU */
    {{slot_CG, 0, 1, 3, 1.520, 114.1, 0, 0},
     {slot_CD, 1, 3, slot_CG, 1.516, 112.6, 1, 0},
     {slot_OE1, 3, slot_CG, slot_CD, 1.252, 118.3, 2, 0},
     {slot_OE2, 3, slot_CG, slot_CD, 1.252, 118.3, 2, 180}},
    /* GLY */ {},
    /* HIS */
    {{slot_CG, 0, 1, 3, 1.492, 113.8, 0, 0},
     {slot_ND1, 1, 3, slot_CG, 1.369, 122.7, 1, 0},
     {slot_CD2, 1, 3, slot_CG, 1.353, 131.0, 1, 180},
     {slot_CE1, 3, slot_CG, slot_ND1, 1.343, 109.0, -1, 180},
     {slot_NE2, 3, slot_CG, slot_CD2, 1.374, 107.2, -1, 180}},
    /* ILE */
    {{slot_CG1, 0, 1, 3, 1.530, 110.4, 0, 0},
     {slot_CG2, 0, 1, 3, 1.521, 110.5, 0, -122},
     {slot_CD1, 1, 3, slot_CG1, 1.513, 113.9, 1, 0}},
    /* LEU */
    {{slot_CG, 0, 1, 3, 1.530, 116.3, 0, 0},
     {slot_CD1, 1, 3, slot_CG, 1.521, 110.7, 1, 0},
     {slot_CD2, 1, 3, slot_CG, 1.521, 110.4, 1, 122}},
    /* LYS */
    {{slot_CG, 0, 1, 3, 1.520, 114.0, 0, 0},
     {slot_CD, 1, 3, slot_CG, 1.520, 111.3, 1, 0},
     {slot_CE, 3, slot_CG, slot_CD, 1.508, 111.9, 2, 0},
     {slot_NZ, slot_CG, slot_CD, slot_CE, 1.486, 111.7, 3, 0}},
    /* MET */
    {{slot_CG, 0, 1, 3, 1.520, 113.7, 0, 0},
     {slot_SD, 1, 3, slot_CG, 1.807, 112.7, 1, 0},
     {slot_CE, 3, slot_CG, slot_SD, 1.789, 100.9, 2, 0}},
    /* PHE */
    {{slot_CG, 0, 1, 3, 1.505, 113.8, 0, 0},
     {slot_CD1, 1, 3, slot_CG, 1.390, 120.8, 1, 0},
     {slot_CD2, 1, 3, slot_CG, 1.390, 120.8, 1, 180},
     {slot_CE1, 3, slot_CG, slot_CD1, 1.390, 121.0, -1, 180},
     {slot_CE2, 3, slot_CG, slot_CD2, 1.390, 121.0, -1, 180},
     {slot_CZ, slot_CG, slot_CD1, slot_CE1, 1.390, 120.0, -1, 0}},
    /* PRO */
    {{slot_CG, 0, 1, 3, 1.495, 104.5, 0, 0},
     {slot_CD, 1, 3, slot_CG, 1.503, 105.5, 1, 0}},
    /* SER */ {{slot_OG, 0, 1, 3, 1.417, 110.8, 0, 0}},
    /* THR */
    {{slot_OG1, 0, 1, 3, 1.433, 109.5, 0, 0},
     {slot_CG2, 0, 1, 3, 1.521, 110.5, 0, -122}},
    /* TRP */
    {{slot_CG, 0, 1, 3, 1.498, 113.6, 0, 0},
     {slot_CD1, 1, 3, slot_CG, 1.363, 126.9, 1, 0},
     {slot_CD2, 1, 3, slot_CG, 1.433, 126.6, 1, 180},
     {slot_NE1, 3, slot_CG, slot_CD1, 1.375, 110.2, -1, 180},
     {slot_CE2, 3, slot_CG, slot_CD2, 1.409, 107.3, -1, 180},
     {slot_CE3, 3, slot_CG, slot_CD2, 1.398, 133.9, -1, 0},
     {slot_CZ2, slot_CG, slot_CD2, slot_CE2, 1.394, 122.4, -1, 180},
     {slot_CZ3, slot_CG, slot_CD2, slot_CE3, 1.391, 118.7, -1, 180},
     {slot_CH2, slot_CD2, slot_CE3, slot_CZ3, 1.368, 117.5, -1, 0}},
    /* TYR */
    {{slot_CG, 0, 1, 3, 1.512, 113.9, 0, 0},
     {slot_CD1, 1, 3, slot_CG, 1.389, 120.8, 1, 0},
     {slot_CD2, 1, 3, slot_CG, 1.389, 120.8, 1, 180},
     {slot_CE1, 3, slot_CG, slot_CD1, 1.382, 121.1, -1, 180},
     {slot_CE2, 3, slot_CG, slot_CD2, 1.382, 121.1, -1, 180},
     {slot_CZ, slot_CG, slot_CD1, slot_CE1, 1.378, 119.5, -1, 0},
     {slot_OH, slot_CD1, slot_CE1, slot_CZ, 1.376, 119.9, -1, 180}},
    /* VAL */
    {{slot_CG1, 0, 1, 3, 1.527, 110.6, 0, 0},
     {slot_CG2, 0, 1, 3, 1.527, 110.4, 0, 122}},
};

}  // namespace

ProteinStructure make_toy_protein(int length, Rng& rng, const ToyProteinConfig& cfg) {
  if (length < 4 || length > 64)
    throw Error("InvalidLength", "toy protein length must be in [4, 64], got " +
                                     std::to_string(length));

  ProteinStructure p = ProteinStructure::empty(length);
  for (int i = 0; i < length; ++i) {
    p.seq[i] = ResidueType(rng.uniform_int(0, num_residue_types - 1));
    p.b_factor[i] = cfg.b_factor;
  }

  const double phi = cfg.phi_deg * deg;
  const double psi = cfg.psi_deg * deg;

  // Backbone chain N-CA-C from ideal internal coordinates. The CA-CA spacing
  // of a trans chain at these values comes out at 3.80 A.
  p.set_atom(0, slot_N, {0, 0, 0});
  p.set_atom(0, slot_CA, {1.458, 0, 0});
  p.set_atom(0, slot_C,
             place_atom({0, 1, 0}, p.atom(0, slot_N), p.atom(0, slot_CA), 1.525, 111.0 * deg,
                        -55.0 * deg));
  for (int i = 0; i + 1 < length; ++i) {
    Vec3 n_next = place_atom(p.atom(i, slot_N), p.atom(i, slot_CA), p.atom(i, slot_C), 1.329,
                             116.5 * deg, psi);
    Vec3 ca_next = place_atom(p.atom(i, slot_CA), p.atom(i, slot_C), n_next, 1.458, 121.7 * deg,
                              M_PI);
    Vec3 c_next = place_atom(p.atom(i, slot_C), n_next, ca_next, 1.525, 111.0 * deg, phi);
    p.set_atom(i + 1, slot_N, n_next);
    p.set_atom(i + 1, slot_CA, ca_next);
    p.set_atom(i + 1, slot_C, c_next);
  }
  for (int i = 0; i < length; ++i) {
    // Carbonyl oxygen anti to the next amide nitrogen (psi + 180).
    p.set_atom(i, slot_O,
               place_atom(p.atom(i, slot_N), p.atom(i, slot_CA), p.atom(i, slot_C), 1.231,
                          120.8 * deg, psi + M_PI));
  }

  for (int i = 0; i < length; ++i)
    if (p.seq[i] != ResidueType::GLY)
      p.set_atom(i, slot_CB, ideal_cb(p.atom(i, slot_N), p.atom(i, slot_CA), p.atom(i, slot_C)));

  // Side chains are packed greedily: each residue tries random staggered
  // rotamer combinations and keeps the first whose atoms stay clear of
  // everything placed so far (full backbone plus earlier side chains),
  // falling back to the least-overlapping candidate. Without this the helix
  // contacts at i+3/i+4 leave the corpus full of vdW clashes. A pinned chi
  // skips the search so rotamer-recovery checks see the exact target.
  struct Occupied {
    int res, slot;
    Vec3 pos;
    double radius;
  };
  std::vector<Occupied> occupied;
  for (int i = 0; i < length; ++i)
    for (int s : {slot_N, slot_CA, slot_C, slot_O, slot_CB})
      if (p.has_atom(i, s)) occupied.push_back({i, s, p.atom(i, s), slot_vdw_radius(s)});

  // Overlap margin: candidates are accepted only while every counted pair
  // stays 0.1 A clear of the 0.4 A overlap that the clash score flags.
  const double margin = 0.3;

  for (int i = 0; i < length; ++i) {
    const ResidueType t = p.seq[i];
    const ChiDefinition& cd = chi_definition(t);
    const std::vector<SideChainStep>& recipe = recipe_by_type[int(t)];
    if (recipe.empty()) continue;

    // Pairs within bond-graph distance <= 3 are covalent-neighborhood
    // contacts, mirroring the clash score's exclusion. Only residues i-1,
    // i, i+1 can be that close to atoms of residue i; BFS over their joint
    // bond graph gives the distance from each recipe slot.
    const int lo = std::max(0, i - 1), hi = std::min(length - 1, i + 1);
    const int n_nodes = (hi - lo + 1) * num_atom_slots;
    auto node = [&](int res, int slot) { return (res - lo) * num_atom_slots + slot; };
    std::vector<std::vector<int>> adj(static_cast<size_t>(n_nodes));
    for (int r = lo; r <= hi; ++r) {
      for (const auto& [a, b] : residue_bonds(p.seq[r])) {
        adj[size_t(node(r, a))].push_back(node(r, b));
        adj[size_t(node(r, b))].push_back(node(r, a));
      }
      if (r + 1 <= hi) {
        adj[size_t(node(r, slot_C))].push_back(node(r + 1, slot_N));
        adj[size_t(node(r + 1, slot_N))].push_back(node(r, slot_C));
      }
    }
    // near[k][n] = true when recipe slot k is within three bonds of node n.
    std::vector<std::vector<char>> near(recipe.size(), std::vector<char>(size_t(n_nodes), 0));
    for (size_t k = 0; k < recipe.size(); ++k) {
      std::vector<int> depth(size_t(n_nodes), -1);
      std::vector<int> queue{node(i, recipe[k].slot)};
      depth[size_t(queue[0])] = 0;
      for (size_t qi = 0; qi < queue.size(); ++qi) {
        const int u = queue[qi];
        near[k][size_t(u)] = 1;
        if (depth[size_t(u)] == 3) continue;
        for (int w : adj[size_t(u)])
          if (depth[size_t(w)] < 0) {
            depth[size_t(w)] = depth[size_t(u)] + 1;
            queue.push_back(w);
          }
      }
    }

    const int tries = cfg.fixed_chi_deg ? 1 : 24;
    double best_penalty = std::numeric_limits<double>::infinity();
    std::vector<Vec3> best_pos(recipe.size());
    for (int attempt = 0; attempt < tries; ++attempt) {
      double chi[4] = {0, 0, 0, 0};
      for (int k = 0; k < cd.n_chi; ++k) {
        double target = cfg.fixed_chi_deg ? *cfg.fixed_chi_deg
                                          : std::array<double, 3>{-60.0, 60.0, 180.0}[size_t(
                                                rng.uniform_int(0, 2))];
        chi[k] = target * deg + cfg.chi_noise_rad * rng.normal();
      }
      for (const SideChainStep& st : recipe) {
        double torsion = st.offset_deg * deg + (st.chi_index >= 0 ? chi[st.chi_index] : 0.0);
        p.set_atom(i, st.slot,
                   place_atom(p.atom(i, st.a), p.atom(i, st.b), p.atom(i, st.c), st.bond,
                              st.angle_deg * deg, torsion));
      }

      double penalty = 0;
      for (size_t k = 0; k < recipe.size(); ++k) {
        const Vec3 q = p.atom(i, recipe[k].slot);
        const double rq = slot_vdw_radius(recipe[k].slot);
        for (const Occupied& o : occupied) {
          if (o.res >= lo && o.res <= hi && near[k][size_t(node(o.res, o.slot))]) continue;
          const double overlap = rq + o.radius - norm(q - o.pos) - margin;
          if (overlap > 0) penalty += overlap;
        }
        for (size_t k2 = k + 1; k2 < recipe.size(); ++k2) {
          if (near[k][size_t(node(i, recipe[k2].slot))]) continue;
          const double overlap =
              rq + slot_vdw_radius(recipe[k2].slot) - norm(q - p.atom(i, recipe[k2].slot)) -
              margin;
          if (overlap > 0) penalty += overlap;
        }
      }
      if (penalty < best_penalty) {
        best_penalty = penalty;
        for (size_t k = 0; k < recipe.size(); ++k) best_pos[k] = p.atom(i, recipe[k].slot);
        if (penalty == 0) break;
      }
    }

    for (size_t k = 0; k < recipe.size(); ++k) {
      p.set_atom(i, recipe[k].slot, best_pos[k]);
      occupied.push_back({i, recipe[k].slot, best_pos[k], slot_vdw_radius(recipe[k].slot)});
    }
  }

  validate(p);
  return p;
}

}  // namespace plfm
