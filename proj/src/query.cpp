#include "kgq/query.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>

namespace kgq {

namespace {

struct Token {
  enum class Kind { Ident, Punct, End };
  Kind kind = Kind::End;
  std::string text;
  char punct = 0;
  std::size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) { advance(); }

  const Token& peek() const { return tok_; }

  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  static bool is_punct(char c) {
    return c == '?' || c == ':' || c == '.' || c == ',' || c == '&' || c == '|' || c == '(' ||
           c == ')';
  }

  void advance() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    tok_ = Token{};
    tok_.pos = pos_;
    if (pos_ >= text_.size()) return;
    char c = text_[pos_];
    if (is_punct(c)) {
      tok_.kind = Token::Kind::Punct;
      tok_.punct = c;
      ++pos_;
      return;
    }
    if (c == '"') {
      std::size_t end = text_.find('"', pos_ + 1);
      if (end == std::string::npos) throw ParseError("unterminated quoted identifier", pos_);
      tok_.kind = Token::Kind::Ident;
      tok_.text = text_.substr(pos_ + 1, end - pos_ - 1);
      pos_ = end + 1;
      return;
    }
    std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           !is_punct(text_[pos_]) && text_[pos_] != '"') {
      ++pos_;
    }
    tok_.kind = Token::Kind::Ident;
    tok_.text = text_.substr(start, pos_ - start);
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  Token tok_;
};

class Parser {
 public:
  Parser(const std::string& text, const Vocab& vocab) : lex_(text), vocab_(vocab) {}

  EpfoQuery parse() {
    expect_punct('?');
    Token target = expect_ident("target variable name");
    q_.var_names.push_back(target.text);
    expect_punct(':');
    if (lex_.peek().kind == Token::Kind::Ident && lex_.peek().text == "exists") {
      lex_.next();
      while (true) {
        Token v = expect_ident("quantified variable name");
        if (v.text == q_.var_names[kTargetVar]) {
          throw ParseError("variable '" + v.text + "' used as both quantified and target", v.pos);
        }
        if (var_id(v.text)) {
          throw ParseError("variable '" + v.text + "' quantified twice", v.pos);
        }
        VarId id = static_cast<VarId>(q_.var_names.size());
        q_.var_names.push_back(v.text);
        q_.bound_vars.push_back(id);
        if (lex_.peek().kind == Token::Kind::Punct && lex_.peek().punct == ',') {
          lex_.next();
          continue;
        }
        break;
      }
      expect_punct('.');
    }
    q_.formula = parse_expr();
    Token end = lex_.next();
    if (end.kind != Token::Kind::End) {
      throw ParseError("unexpected trailing input", end.pos);
    }
    check_usage();
    return std::move(q_);
  }

 private:
  Formula parse_expr() {
    std::vector<Formula> terms;
    terms.push_back(parse_term());
    while (lex_.peek().kind == Token::Kind::Punct && lex_.peek().punct == '|') {
      lex_.next();
      terms.push_back(parse_term());
    }
    if (terms.size() == 1) return std::move(terms[0]);
    return Formula::disj(std::move(terms));
  }

  Formula parse_term() {
    std::vector<Formula> factors;
    factors.push_back(parse_factor());
    while (lex_.peek().kind == Token::Kind::Punct && lex_.peek().punct == '&') {
      lex_.next();
      factors.push_back(parse_factor());
    }
    if (factors.size() == 1) return std::move(factors[0]);
    return Formula::conj(std::move(factors));
  }

  Formula parse_factor() {
    if (lex_.peek().kind == Token::Kind::Punct && lex_.peek().punct == '(') {
      lex_.next();
      Formula inner = parse_expr();
      expect_punct(')');
      return inner;
    }
    Token rel = expect_ident("relation name");
    auto rel_it = vocab_.relation_ids.find(rel.text);
    if (rel_it == vocab_.relation_ids.end()) {
      throw ParseError("unknown relation name '" + rel.text + "'", rel.pos);
    }
    expect_punct('(');
    Token a = expect_ident("atom argument");
    expect_punct(',');
    Token b = expect_ident("atom argument");
    expect_punct(')');
    return Formula::leaf(make_atom(rel_it->second, a, b));
  }

  // Resolves arguments and rewrites the atom so the dependency edge runs
  // subject -> object: object-side anchors and a target in subject position
  // both flip through the reciprocal relation.
  Atom make_atom(RelationId p, const Token& a, const Token& b) {
    Term s = resolve(a);
    Term o = resolve(b);
    if (s.is_anchor() && o.is_anchor()) {
      throw ParseError("atom has two anchor entities; at least one argument must be a variable",
                       a.pos);
    }
    if (s == o) {
      throw ParseError("atom relates variable '" + q_.var_names[s.id] + "' to itself", a.pos);
    }
    if (o.is_anchor() || (s.is_var() && s.id == kTargetVar && o.is_var())) {
      std::swap(s, o);
      p = vocab_.reciprocal(p);
    }
    used_[o.id] = true;
    if (s.is_var()) used_[s.id] = true;
    return Atom{p, s, o};
  }

  Term resolve(const Token& t) {
    if (auto v = var_id(t.text)) return Term::var(*v);
    auto it = vocab_.entity_ids.find(t.text);
    if (it != vocab_.entity_ids.end()) return Term::anchor(it->second);
    throw ParseError("unquantified variable '" + t.text + "' (not declared via 'exists' and not an entity name)",
                     t.pos);
  }

  std::optional<VarId> var_id(const std::string& name) const {
    for (VarId i = 0; i < q_.var_names.size(); ++i) {
      if (q_.var_names[i] == name) return i;
    }
    return std::nullopt;
  }

  void check_usage() const {
    if (!used_.count(kTargetVar)) {
      throw ParseError("target variable '" + q_.var_names[kTargetVar] + "' does not occur in any atom",
                       0);
    }
    for (VarId v : q_.bound_vars) {
      if (!used_.count(v)) {
        throw ParseError("unused quantified variable '" + q_.var_names[v] + "'", 0);
      }
    }
  }

  Token expect_ident(const std::string& what) {
    Token t = lex_.next();
    if (t.kind != Token::Kind::Ident) {
      throw ParseError("expected " + what, t.pos);
    }
    return t;
  }

  void expect_punct(char c) {
    Token t = lex_.next();
    if (t.kind != Token::Kind::Punct || t.punct != c) {
      throw ParseError(std::string("expected '") + c + "'", t.pos);
    }
  }

  Lexer lex_;
  const Vocab& vocab_;
  EpfoQuery q_;
  std::map<VarId, bool> used_;
};

std::string quote_if_needed(const std::string& name) {
  bool plain = !name.empty();
  for (char c : name) {
    if (std::isspace(static_cast<unsigned char>(c)) || std::string("?:.,&|()\"").find(c) != std::string::npos) {
      plain = false;
      break;
    }
  }
  return plain ? name : '"' + name + '"';
}

std::string print_formula(const Formula& f, const std::vector<std::string>& var_names,
                          const Vocab& vocab, bool parenthesize) {
  switch (f.node) {
    case Formula::Node::Atom:
      return print_atom(f.atom, var_names, vocab);
    case Formula::Node::And: {
      std::string out;
      for (std::size_t i = 0; i < f.children.size(); ++i) {
        if (i) out += " & ";
        out += print_formula(f.children[i], var_names, vocab, true);
      }
      return parenthesize ? out : out;
    }
    case Formula::Node::Or: {
      std::string out;
      for (std::size_t i = 0; i < f.children.size(); ++i) {
        if (i) out += " | ";
        out += print_formula(f.children[i], var_names, vocab, true);
      }
      return parenthesize ? "(" + out + ")" : out;
    }
  }
  return {};
}

}  // namespace

EpfoQuery parse_query(const std::string& text, const Vocab& vocab) {
  return Parser(text, vocab).parse();
}

std::string print_atom(const Atom& a, const std::vector<std::string>& var_names,
                       const Vocab& vocab) {
  auto term_name = [&](const Term& t) {
    return t.is_var() ? var_names[t.id] : quote_if_needed(vocab.entity_names[t.id]);
  };
  return quote_if_needed(vocab.relation_names[a.p]) + "(" + term_name(a.subject) + "," +
         term_name(a.object) + ")";
}

std::string print_query(const EpfoQuery& q, const Vocab& vocab) {
  std::string out = "?" + q.var_names[q.target] + " : ";
  if (!q.bound_vars.empty()) {
    out += "exists ";
    for (std::size_t i = 0; i < q.bound_vars.size(); ++i) {
      if (i) out += ", ";
      out += q.var_names[q.bound_vars[i]];
    }
    out += " . ";
  }
  out += print_formula(q.formula, q.var_names, vocab, false);
  return out;
}

namespace {

std::vector<Conjunction> dnf_of(const Formula& f) {
  switch (f.node) {
    case Formula::Node::Atom:
      return {Conjunction{{f.atom}}};
    case Formula::Node::Or: {
      std::vector<Conjunction> out;
      for (const Formula& child : f.children) {
        auto sub = dnf_of(child);
        out.insert(out.end(), sub.begin(), sub.end());
      }
      return out;
    }
    case Formula::Node::And: {
      std::vector<Conjunction> acc{Conjunction{}};
      for (const Formula& child : f.children) {
        auto sub = dnf_of(child);
        std::vector<Conjunction> next;
        next.reserve(acc.size() * sub.size());
        for (const Conjunction& left : acc) {
          for (const Conjunction& right : sub) {
            Conjunction merged = left;
            merged.atoms.insert(merged.atoms.end(), right.atoms.begin(), right.atoms.end());
            next.push_back(std::move(merged));
          }
        }
        acc = std::move(next);
      }
      return acc;
    }
  }
  return {};
}

void dedup_atoms(Conjunction& c) {
  std::vector<Atom> out;
  for (const Atom& a : c.atoms) {
    if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
  }
  c.atoms = std::move(out);
}

std::string var_name(const std::vector<std::string>& names, VarId v) {
  return v < names.size() ? names[v] : "V" + std::to_string(v);
}

}  // namespace

std::vector<VarId> conjunction_vars(const Conjunction& c) {
  std::set<VarId> vars;
  for (const Atom& a : c.atoms) {
    if (a.subject.is_var()) vars.insert(a.subject.id);
    if (a.object.is_var()) vars.insert(a.object.id);
  }
  return {vars.begin(), vars.end()};
}

void validate_conjunction(const Conjunction& c, const std::vector<std::string>& var_names) {
  if (c.atoms.empty()) throw InvalidQuery("invalid query structure: empty conjunction");

  std::set<VarId> vars;
  std::set<VarId> has_in, has_out;
  std::map<VarId, std::set<VarId>> edges;  // var -> var dependency edges
  for (const Atom& a : c.atoms) {
    if (!a.object.is_var()) {
      throw InvalidQuery("invalid query structure: atom object is not a variable");
    }
    vars.insert(a.object.id);
    has_in.insert(a.object.id);
    if (a.subject.is_var()) {
      vars.insert(a.subject.id);
      has_out.insert(a.subject.id);
      edges[a.subject.id].insert(a.object.id);
    }
  }

  if (!vars.count(kTargetVar)) {
    throw InvalidQuery("invalid query structure: target does not occur in conjunction");
  }
  if (has_out.count(kTargetVar)) {
    throw InvalidQuery("invalid query structure: target '" + var_name(var_names, kTargetVar) +
                       "' is not a sink");
  }
  for (VarId v : vars) {
    if (v != kTargetVar && !has_out.count(v)) {
      throw InvalidQuery("invalid query structure: extra sink variable '" +
                         var_name(var_names, v) + "' (target must be the unique sink)");
    }
    if (!has_in.count(v)) {
      throw InvalidQuery("invalid query structure: variable '" + var_name(var_names, v) +
                         "' has no incoming atom (only anchors may be sources)");
    }
  }

  // Cycle check over the variable dependency edges (anchors cannot be on a
  // cycle since they have no incoming edges).
  std::map<VarId, int> state;  // 0 unseen, 1 on stack, 2 done
  std::vector<VarId> stack;
  auto dfs = [&](auto&& self, VarId v) -> void {
    state[v] = 1;
    stack.push_back(v);
    for (VarId next : edges[v]) {
      if (state[next] == 1) {
        std::string cycle;
        auto it = std::find(stack.begin(), stack.end(), next);
        for (; it != stack.end(); ++it) cycle += var_name(var_names, *it) + " -> ";
        cycle += var_name(var_names, next);
        throw InvalidQuery("invalid query structure: dependency cycle " + cycle);
      }
      if (state[next] == 0) self(self, next);
    }
    stack.pop_back();
    state[v] = 2;
  };
  for (VarId v : vars) {
    if (state[v] == 0) dfs(dfs, v);
  }
}

DnfQuery to_dnf(const EpfoQuery& q) {
  DnfQuery out;
  out.var_names = q.var_names;
  out.disjuncts = dnf_of(q.formula);
  for (Conjunction& c : out.disjuncts) {
    dedup_atoms(c);
    validate_conjunction(c, out.var_names);
  }
  return out;
}

std::vector<Atom> topo_order(const Conjunction& c) {
  std::vector<Atom> order;
  std::vector<bool> visited(c.atoms.size(), false);
  std::set<VarId> resolved;

  auto ready = [&](const Atom& a) {
    return a.subject.is_anchor() || resolved.count(a.subject.id) > 0;
  };

  // Repeatedly take the first ready atom by input position.
  while (order.size() < c.atoms.size()) {
    bool progressed = false;
    for (std::size_t i = 0; i < c.atoms.size(); ++i) {
      if (visited[i] || !ready(c.atoms[i])) continue;
      visited[i] = true;
      resolved.insert(c.atoms[i].object.id);
      order.push_back(c.atoms[i]);
      progressed = true;
      break;
    }
    if (!progressed) {
      throw InvalidQuery("internal error: conjunction has no admissible atom order");
    }
  }
  return order;
}

}  // namespace kgq
