#pragma once
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oprl/estimation.hpp"
#include "oprl/model.hpp"

// Text formats: models and families as token streams, triples as CSV.
// Probabilities are written with full precision so save/load round-trips.
namespace oprl {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace detail {

inline std::string next_token(std::istream& in, const char* what) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {  // comment runs to end of line
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw ParseError(std::string("unexpected end of input, wanted ") + what);
}

inline int next_int(std::istream& in, const char* what) {
  std::string tok = next_token(in, what);
  try {
    size_t pos = 0;
    int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("bad integer '") + tok + "' for " + what);
  }
}

inline double next_double(std::istream& in, const char* what) {
  std::string tok = next_token(in, what);
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("bad number '") + tok + "' for " + what);
  }
}

inline void expect(std::istream& in, const std::string& word) {
  std::string tok = next_token(in, word.c_str());
  if (tok != word) throw ParseError("expected '" + word + "', found '" + tok + "'");
}

}  // namespace detail

// Model block:
//   pomdp
//   H <int> S <int> A <int> O <int>
//   mu <S probabilities>
//   T <h> <a> <s> <S probabilities over the next state>   for h in [0,H-1)
//   E <h> <s> <O probabilities>                           for h in [0,H)
//   R <o> <A rewards in [0,1]>
//   end
// Records may appear in any order after the sizes; '#' starts a comment.
inline TabularModel parse_model(std::istream& in) {
  detail::expect(in, "pomdp");
  TabularModel m;
  detail::expect(in, "H");
  m.H = detail::next_int(in, "H");
  detail::expect(in, "S");
  m.S = detail::next_int(in, "S");
  detail::expect(in, "A");
  m.A = detail::next_int(in, "A");
  detail::expect(in, "O");
  m.O = detail::next_int(in, "O");
  if (m.H < 1 || m.S < 1 || m.A < 1 || m.O < 1) throw ParseError("sizes must be positive");
  m.mu = Vec::Zero(m.S);
  m.T.assign(m.H - 1, std::vector<Mat>(m.A, Mat::Zero(m.S, m.S)));
  m.E.assign(m.H, Mat::Zero(m.O, m.S));
  m.r = Mat::Zero(m.O, m.A);
  bool have_mu = false;
  std::vector<std::vector<std::vector<bool>>> have_T(
      m.H - 1, std::vector<std::vector<bool>>(m.A, std::vector<bool>(m.S, false)));
  std::vector<std::vector<bool>> have_E(m.H, std::vector<bool>(m.S, false));
  std::vector<bool> have_R(m.O, false);
  for (;;) {
    std::string tok = detail::next_token(in, "record or end");
    if (tok == "end") break;
    if (tok == "mu") {
      for (int s = 0; s < m.S; ++s) m.mu[s] = detail::next_double(in, "mu entry");
      have_mu = true;
    } else if (tok == "T") {
      int h = detail::next_int(in, "T step");
      int a = detail::next_int(in, "T action");
      int s = detail::next_int(in, "T state");
      if (h < 0 || h >= m.H - 1 || a < 0 || a >= m.A || s < 0 || s >= m.S)
        throw ParseError("T record index out of range");
      for (int s2 = 0; s2 < m.S; ++s2)
        m.T[h][a](s2, s) = detail::next_double(in, "T entry");
      have_T[h][a][s] = true;
    } else if (tok == "E") {
      int h = detail::next_int(in, "E step");
      int s = detail::next_int(in, "E state");
      if (h < 0 || h >= m.H || s < 0 || s >= m.S)
        throw ParseError("E record index out of range");
      for (int o = 0; o < m.O; ++o) m.E[h](o, s) = detail::next_double(in, "E entry");
      have_E[h][s] = true;
    } else if (tok == "R") {
      int o = detail::next_int(in, "R observation");
      if (o < 0 || o >= m.O) throw ParseError("R record index out of range");
      for (int a = 0; a < m.A; ++a) m.r(o, a) = detail::next_double(in, "R entry");
      have_R[o] = true;
    } else {
      throw ParseError("unknown record '" + tok + "'");
    }
  }
  if (!have_mu) throw ParseError("missing mu record");
  for (int h = 0; h < m.H - 1; ++h)
    for (int a = 0; a < m.A; ++a)
      for (int s = 0; s < m.S; ++s)
        if (!have_T[h][a][s])
          throw ParseError("missing T record at h=" + std::to_string(h) + " a=" +
                           std::to_string(a) + " s=" + std::to_string(s));
  for (int h = 0; h < m.H; ++h)
    for (int s = 0; s < m.S; ++s)
      if (!have_E[h][s])
        throw ParseError("missing E record at h=" + std::to_string(h) + " s=" +
                         std::to_string(s));
  for (int o = 0; o < m.O; ++o)
    if (!have_R[o]) throw ParseError("missing R record at o=" + std::to_string(o));
  validate(m);
  return m;
}

inline void write_model(std::ostream& out, const TabularModel& m) {
  out << "pomdp\n";
  out << "H " << m.H << " S " << m.S << " A " << m.A << " O " << m.O << "\n";
  out << "mu";
  for (int s = 0; s < m.S; ++s) out << " " << format_double(m.mu[s]);
  out << "\n";
  for (int h = 0; h < m.H - 1; ++h)
    for (int a = 0; a < m.A; ++a)
      for (int s = 0; s < m.S; ++s) {
        out << "T " << h << " " << a << " " << s;
        for (int s2 = 0; s2 < m.S; ++s2) out << " " << format_double(m.T[h][a](s2, s));
        out << "\n";
      }
  for (int h = 0; h < m.H; ++h)
    for (int s = 0; s < m.S; ++s) {
      out << "E " << h << " " << s;
      for (int o = 0; o < m.O; ++o) out << " " << format_double(m.E[h](o, s));
      out << "\n";
    }
  for (int o = 0; o < m.O; ++o) {
    out << "R " << o;
    for (int a = 0; a < m.A; ++a) out << " " << format_double(m.r(o, a));
    out << "\n";
  }
  out << "end\n";
}

// Family block:
//   family
//   count <N> true <index>
//   <N model blocks>
//   end
inline ParameterFamily parse_family(std::istream& in) {
  detail::expect(in, "family");
  detail::expect(in, "count");
  int n = detail::next_int(in, "candidate count");
  detail::expect(in, "true");
  int true_index = detail::next_int(in, "true index");
  if (n < 1) throw ParseError("family needs at least one candidate");
  if (true_index < 0 || true_index >= n) throw ParseError("true index out of range");
  ParameterFamily fam;
  fam.true_index = true_index;
  for (int i = 0; i < n; ++i) fam.candidates.push_back(parse_model(in));
  detail::expect(in, "end");
  validate(fam);
  return fam;
}

inline void write_family(std::ostream& out, const ParameterFamily& fam) {
  out << "family\n";
  out << "count " << fam.size() << " true " << fam.true_index << "\n";
  for (const TabularModel& m : fam.candidates) write_model(out, m);
  out << "end\n";
}

inline TabularModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file " + path);
  return parse_model(in);
}

inline ParameterFamily load_family(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open family file " + path);
  std::string first;
  std::streampos start = in.tellg();
  if (!(in >> first)) throw ParseError("empty family file " + path);
  in.seekg(start);
  if (first == "pomdp") {  // single model doubles as a singleton family
    ParameterFamily fam;
    fam.candidates.push_back(parse_model(in));
    fam.true_index = 0;
    return fam;
  }
  return parse_family(in);
}

// Triples CSV: header k,h,a,a2,o_prev,o_cur,o_next; one collected triple per
// row, k is the 1-based iteration that collected it.
inline void write_triples_csv(std::ostream& out, const std::vector<TripleDataset>& data, int H,
                              int A) {
  out << "k,h,a,a2,o_prev,o_cur,o_next\n";
  size_t max_k = 0;
  for (const TripleDataset& d : data) max_k = std::max(max_k, d.samples.size());
  for (size_t k = 0; k < max_k; ++k)
    for (int h = 1; h < H; ++h)
      for (int a = 0; a < A; ++a)
        for (int a2 = 0; a2 < A; ++a2) {
          const TripleDataset& d = data[tuple_index(h, a, a2, A)];
          if (k >= d.samples.size()) continue;
          const ObsTriple& t = d.samples[k];
          out << (k + 1) << "," << h << "," << a << "," << a2 << "," << t.o_prev << ","
              << t.o_cur << "," << t.o_next << "\n";
        }
}

inline std::vector<TripleDataset> read_triples_csv(std::istream& in, int H, int A) {
  std::vector<TripleDataset> data(tuple_count(H, A));
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty triples file");
  if (line != "k,h,a,a2,o_prev,o_cur,o_next")
    throw ParseError("unexpected triples header '" + line + "'");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    long vals[7];
    for (int i = 0; i < 7; ++i) {
      std::string cell;
      if (!std::getline(row, cell, ','))
        throw ParseError("short triples row at line " + std::to_string(lineno));
      try {
        vals[i] = std::stol(cell);
      } catch (const std::exception&) {
        throw ParseError("bad triples cell '" + cell + "' at line " + std::to_string(lineno));
      }
    }
    int h = static_cast<int>(vals[1]), a = static_cast<int>(vals[2]),
        a2 = static_cast<int>(vals[3]);
    if (h < 1 || h >= H || a < 0 || a >= A || a2 < 0 || a2 >= A)
      throw ParseError("triples tuple out of range at line " + std::to_string(lineno));
    data[tuple_index(h, a, a2, A)].samples.push_back(
        ObsTriple{static_cast<int>(vals[4]), static_cast<int>(vals[5]),
                  static_cast<int>(vals[6])});
  }
  return data;
}

inline std::vector<TripleDataset> load_triples(const std::string& path, int H, int A) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open triples file " + path);
  return read_triples_csv(in, H, A);
}

}  // namespace oprl
