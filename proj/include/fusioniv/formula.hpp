#pragma once

#include <string>
#include <utility>
#include <vector>

namespace fusioniv {

// One product of factors, e.g. "z", "x1^2", "x1*x3". The intercept is the
// empty product. Exponents are collected per variable, so "x1*x1" and
// "x1^2" canonicalize identically.
struct Term {
  int z_pow = 0;
  // (covariate index j >= 1, power >= 1), sorted by j
  std::vector<std::pair<int, int>> x_pows;

  int degree() const;
  int max_x_index() const;
  std::string label() const;
  double eval(double z, const double* x, int p) const;

  friend bool operator==(const Term&, const Term&) = default;
};

// Sum of distinct terms. Canonical form keeps the intercept and lower-degree
// terms first (stable within a degree, preserving the order written).
class Formula {
 public:
  Formula() = default;
  explicit Formula(std::vector<Term> terms);

  static Formula parse(const std::string& text);

  const std::vector<Term>& terms() const { return terms_; }
  int size() const { return static_cast<int>(terms_.size()); }
  bool has_z() const;
  int max_x_index() const;
  std::string to_string() const;

  // position of the term with the given label, or -1
  int index_of(const std::string& label) const;

  friend bool operator==(const Formula&, const Formula&) = default;

 private:
  std::vector<Term> terms_;
};

Formula parse_formula(const std::string& text);

}  // namespace fusioniv
