#pragma once

#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "graphonforge/density.hpp"
#include "graphonforge/errors.hpp"

namespace graphonforge {

// Parser for the constraint language:
//   graph(roots=[A,B]; verts=[x:C]; edge(r1,x); nonedge(r2,x))
// combined with numbers, + - * and parentheses; a constraint is two
// expressions joined by ==. Roots are referred to as r1, r2, ...
class ConstraintParser {
 public:
  explicit ConstraintParser(std::string text) : s_(std::move(text)) {}

  Constraint parse_constraint() {
    Constraint c;
    c.lhs = parse_expr();
    skip_ws();
    if (!consume("==")) fail("expected '=='");
    c.rhs = parse_expr();
    expect_end();
    return c;
  }

  DensityExpression parse_expression() {
    auto e = parse_expr();
    expect_end();
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError("constraint DSL: " + msg + " at offset " + std::to_string(pos_));
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool consume(const std::string& tok) {
    skip_ws();
    if (s_.compare(pos_, tok.size(), tok) == 0) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }
  void expect(const std::string& tok) {
    if (!consume(tok)) fail("expected '" + tok + "'");
  }
  void expect_end() {
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing input");
  }
  std::string ident() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    if (start == pos_) fail("expected identifier");
    return s_.substr(start, pos_ - start);
  }

  DensityExpression parse_expr() {
    DensityExpression e = parse_term();
    for (;;) {
      skip_ws();
      if (s_.compare(pos_, 2, "==") == 0) return e;
      if (consume("+")) e = e + parse_term();
      else if (consume("-")) e = e - parse_term();
      else return e;
    }
  }
  DensityExpression parse_term() {
    DensityExpression e = parse_unary();
    while (consume("*")) e = e * parse_unary();
    return e;
  }
  DensityExpression parse_unary() {
    if (consume("-")) return parse_unary() * -1.0;
    return parse_primary();
  }
  DensityExpression parse_primary() {
    skip_ws();
    if (consume("(")) {
      auto e = parse_expr();
      expect(")");
      return e;
    }
    if (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(s_.substr(pos_), &used);
      } catch (...) {
        fail("bad number");
      }
      pos_ += used;
      return DensityExpression::constant(v);
    }
    if (s_.compare(pos_, 5, "graph") == 0) {
      pos_ += 5;
      return DensityExpression::graph(parse_graph());
    }
    fail("expected number, graph(...) or '('");
  }

  DecoratedGraph parse_graph() {
    expect("(");
    std::vector<std::string> roots, vert_names, vert_parts;
    struct PairItem {
      std::string a, b;
      PairSpec spec;
    };
    std::vector<PairItem> items;
    for (;;) {
      skip_ws();
      if (consume(")")) break;
      const std::string key = ident();
      if (key == "roots" || key == "verts") {
        expect("=");
        expect("[");
        if (!consume("]")) {
          for (;;) {
            const std::string a = ident();
            if (key == "roots") {
              roots.push_back(a);
            } else {
              expect(":");
              vert_names.push_back(a);
              vert_parts.push_back(ident());
            }
            if (consume("]")) break;
            expect(",");
          }
        }
      } else if (key == "edge" || key == "nonedge") {
        expect("(");
        const std::string a = ident();
        expect(",");
        const std::string b = ident();
        expect(")");
        items.push_back({a, b, key == "edge" ? PairSpec::Edge : PairSpec::NonEdge});
      } else {
        fail("unknown graph clause '" + key + "'");
      }
      skip_ws();
      if (consume(")")) break;
      expect(";");
    }
    std::vector<std::string> deco = roots;
    deco.insert(deco.end(), vert_parts.begin(), vert_parts.end());
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < roots.size(); ++i) index["r" + std::to_string(i + 1)] = static_cast<int>(i);
    for (std::size_t i = 0; i < vert_names.size(); ++i) {
      if (index.count(vert_names[i])) fail("duplicate vertex name " + vert_names[i]);
      index[vert_names[i]] = static_cast<int>(roots.size() + i);
    }
    DecoratedGraph g(static_cast<int>(deco.size()), static_cast<int>(roots.size()), deco);
    for (const auto& it : items) {
      auto a = index.find(it.a), b = index.find(it.b);
      if (a == index.end() || b == index.end()) fail("unknown vertex in pair (" + it.a + "," + it.b + ")");
      g.set(a->second, b->second, it.spec);
    }
    return g;
  }

  std::string s_;
  std::size_t pos_ = 0;
};

inline Constraint parse_constraint(const std::string& text) { return ConstraintParser(text).parse_constraint(); }
inline DensityExpression parse_density_expression(const std::string& text) {
  return ConstraintParser(text).parse_expression();
}

}  // namespace graphonforge
