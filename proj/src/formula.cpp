#include "fusioniv/formula.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "fusioniv/error.hpp"

namespace fusioniv {

int Term::degree() const {
  int d = z_pow;
  for (const auto& [j, k] : x_pows) {
    (void)j;
    d += k;
  }
  return d;
}

int Term::max_x_index() const {
  int m = 0;
  for (const auto& [j, k] : x_pows) {
    (void)k;
    m = std::max(m, j);
  }
  return m;
}

std::string Term::label() const {
  if (degree() == 0) return "1";
  std::ostringstream out;
  bool first = true;
  auto emit = [&](const std::string& base, int pow) {
    if (!first) out << "*";
    out << base;
    if (pow > 1) out << "^" << pow;
    first = false;
  };
  if (z_pow > 0) emit("z", z_pow);
  for (const auto& [j, k] : x_pows) emit("x" + std::to_string(j), k);
  return out.str();
}

namespace {

double int_pow(double base, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= base;
  return r;
}

}  // namespace

double Term::eval(double z, const double* x, int p) const {
  double v = z_pow > 0 ? int_pow(z, z_pow) : 1.0;
  for (const auto& [j, k] : x_pows) {
    if (j > p) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "term references x" + std::to_string(j) + " but sample has p=" + std::to_string(p));
    }
    v *= int_pow(x[j - 1], k);
  }
  return v;
}

Formula::Formula(std::vector<Term> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) {
    throw Error(ErrorCode::SyntaxError, "formula must contain at least one term");
  }
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    for (std::size_t j = i + 1; j < terms_.size(); ++j) {
      if (terms_[i] == terms_[j]) {
        throw Error(ErrorCode::DuplicateTerm, "duplicate term '" + terms_[i].label() + "'");
      }
    }
  }
  std::stable_sort(terms_.begin(), terms_.end(),
                   [](const Term& a, const Term& b) { return a.degree() < b.degree(); });
}

bool Formula::has_z() const {
  return std::any_of(terms_.begin(), terms_.end(), [](const Term& t) { return t.z_pow > 0; });
}

int Formula::max_x_index() const {
  int m = 0;
  for (const Term& t : terms_) m = std::max(m, t.max_x_index());
  return m;
}

std::string Formula::to_string() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (i > 0) out << " + ";
    out << terms_[i].label();
  }
  return out.str();
}

int Formula::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (terms_[i].label() == label) return static_cast<int>(i);
  }
  return -1;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

int parse_positive_int(const std::string& s, const std::string& what) {
  if (s.empty()) throw Error(ErrorCode::SyntaxError, "missing " + what);
  long v = 0;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw Error(ErrorCode::SyntaxError, "invalid " + what + " '" + s + "'");
    }
    v = v * 10 + (c - '0');
    if (v > 1000000) throw Error(ErrorCode::SyntaxError, what + " out of range");
  }
  if (v < 1) throw Error(ErrorCode::SyntaxError, what + " must be >= 1");
  return static_cast<int>(v);
}

// factor := "1" | "z" | "x<j>" each with optional "^<k>", k >= 1
void apply_factor(Term& term, const std::string& raw) {
  const std::string f = trim(raw);
  if (f.empty()) throw Error(ErrorCode::SyntaxError, "empty factor");
  std::string base = f;
  int power = 1;
  const std::size_t caret = f.find('^');
  if (caret != std::string::npos) {
    base = trim(f.substr(0, caret));
    power = parse_positive_int(trim(f.substr(caret + 1)), "exponent");
  }
  if (base == "1") {
    if (caret != std::string::npos) {
      throw Error(ErrorCode::SyntaxError, "intercept does not take an exponent");
    }
    return;
  }
  if (base == "z") {
    term.z_pow += power;
    return;
  }
  if (base.size() >= 2 && base[0] == 'x') {
    const int j = parse_positive_int(base.substr(1), "covariate index");
    for (auto& [idx, pow] : term.x_pows) {
      if (idx == j) {
        pow += power;
        return;
      }
    }
    term.x_pows.emplace_back(j, power);
    std::sort(term.x_pows.begin(), term.x_pows.end());
    return;
  }
  throw Error(ErrorCode::SyntaxError, "bad token '" + base + "'");
}

}  // namespace

Formula Formula::parse(const std::string& text) {
  if (trim(text).empty()) throw Error(ErrorCode::SyntaxError, "empty formula");
  std::vector<Term> terms;
  for (const std::string& term_text : split(text, '+')) {
    if (trim(term_text).empty()) throw Error(ErrorCode::SyntaxError, "empty term");
    Term term;
    for (const std::string& factor : split(term_text, '*')) apply_factor(term, factor);
    terms.push_back(std::move(term));
  }
  return Formula(std::move(terms));
}

Formula parse_formula(const std::string& text) { return Formula::parse(text); }

}  // namespace fusioniv
