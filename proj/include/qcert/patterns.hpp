#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qcert/constraint_space.hpp"

namespace qcert {

/// Canonical constraint patterns on a ring.
///   a: three-body windows starting at every even site
///   b: per six sites {0,1,2},{2,3,4},{3,4,5},{5,6}
///   c: per six sites {0,1,2},{2,3},{3,4,5},{5,6}
///   d: every nearest-neighbour pair
enum class Pattern { A, B, C, D };

inline constexpr Pattern kAllPatterns[] = {Pattern::A, Pattern::B, Pattern::C, Pattern::D};

inline char pattern_name(Pattern p) { return "abcd"[static_cast<int>(p)]; }

inline Pattern parse_pattern(const std::string& s) {
  if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'd') return static_cast<Pattern>(s[0] - 'a');
  throw ValidationError("unknown pattern \"" + s + "\" (expected a, b, c or d)");
}

inline ConstraintSet make_pattern(Pattern p, int n) {
  auto window = [n](int start, int len) {
    Subset s;
    for (int k = 0; k < len; ++k) s.push_back((start + k) % n);
    std::sort(s.begin(), s.end());
    return s;
  };
  ConstraintSet c(n);
  switch (p) {
    case Pattern::A:
      if (n % 2 != 0 || n < 4) throw ValidationError("pattern a needs an even n >= 4");
      for (int i = 0; i < n; i += 2) c.insert(window(i, 3));
      break;
    case Pattern::B:
    case Pattern::C:
      if (n % 6 != 0) throw ValidationError(std::string("pattern ") + pattern_name(p) + " needs n divisible by 6");
      for (int u = 0; u < n; u += 6) {
        c.insert(window(u, 3));
        c.insert(p == Pattern::B ? window(u + 2, 3) : window(u + 2, 2));
        c.insert(window(u + 3, 3));
        c.insert(window(u + 5, 2));
      }
      break;
    case Pattern::D:
      if (n < 3) throw ValidationError("pattern d needs n >= 3");
      for (int i = 0; i < n; ++i) c.insert(window(i, 2));
      break;
  }
  return simplify(c);
}

/// Image of c under i -> (shift + sign*i) mod n.
inline ConstraintSet transform_ring(const ConstraintSet& c, int shift, bool reflect) {
  const int n = c.n();
  ConstraintSet out(n);
  for (const auto& s : c.subsets()) {
    Subset t;
    for (int q : s) t.push_back((((reflect ? -q : q) + shift) % n + n) % n);
    std::sort(t.begin(), t.end());
    out.insert(t);
  }
  return out;
}

/// The canonical pattern c equals up to ring rotation and reflection, if any.
inline std::optional<Pattern> match_pattern(const ConstraintSet& c) {
  const ConstraintSet s = simplify(c);
  for (Pattern p : kAllPatterns) {
    ConstraintSet ref(s.n());
    try {
      ref = make_pattern(p, s.n());
    } catch (const ValidationError&) {
      continue;
    }
    if (ref.size() != s.size()) continue;
    for (int shift = 0; shift < s.n(); ++shift)
      for (bool reflect : {false, true})
        if (simplify(transform_ring(ref, shift, reflect)) == s) return p;
  }
  return std::nullopt;
}

}  // namespace qcert
