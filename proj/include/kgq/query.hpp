#ifndef KGQ_QUERY_HPP
#define KGQ_QUERY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "kgq/kg.hpp"

namespace kgq {

using VarId = std::uint32_t;
inline constexpr VarId kTargetVar = 0;  // variable id 0 is always the query target

struct Term {
  enum class Kind { Anchor, Var };
  Kind kind = Kind::Var;
  std::uint32_t id = 0;  // entity id for anchors, variable id otherwise

  static Term anchor(EntityId e) { return {Kind::Anchor, e}; }
  static Term var(VarId v) { return {Kind::Var, v}; }
  bool is_var() const { return kind == Kind::Var; }
  bool is_anchor() const { return kind == Kind::Anchor; }
  friend bool operator==(const Term&, const Term&) = default;
  friend auto operator<=>(const Term&, const Term&) = default;
};

// One relational atom p(subject, object). The object is always a variable;
// object-anchored and target-subject atoms are rewritten through the
// reciprocal relation when a query is built, so that dependency edges always
// run subject -> object.
struct Atom {
  RelationId p = 0;
  Term subject;
  Term object;

  friend bool operator==(const Atom&, const Atom&) = default;
  friend auto operator<=>(const Atom&, const Atom&) = default;
};

// And/Or tree over atoms.
struct Formula {
  enum class Node { Atom, And, Or };
  Node node = Node::Atom;
  Atom atom;
  std::vector<Formula> children;

  static Formula leaf(Atom a) { return {Node::Atom, a, {}}; }
  static Formula conj(std::vector<Formula> cs) { return {Node::And, {}, std::move(cs)}; }
  static Formula disj(std::vector<Formula> cs) { return {Node::Or, {}, std::move(cs)}; }
};

struct EpfoQuery {
  VarId target = kTargetVar;
  std::vector<VarId> bound_vars;        // ids 1..m
  std::vector<std::string> var_names;   // indexed by VarId; [0] names the target
  Formula formula;
};

struct Conjunction {
  std::vector<Atom> atoms;
};

struct DnfQuery {
  std::vector<Conjunction> disjuncts;
  std::vector<std::string> var_names;
};

struct ParseError : Error {
  ParseError(const std::string& msg, std::size_t pos) : Error(msg), position(pos) {}
  std::size_t position;  // byte offset into the query text
};

struct InvalidQuery : Error {
  using Error::Error;
};

// Parses the query DSL:
//   query := '?' IDENT ':' ['exists' IDENT (',' IDENT)* '.'] expr
//   expr  := term ('|' term)*
//   term  := factor ('&' factor)*
//   factor:= IDENT '(' arg ',' arg ')' | '(' expr ')'
//   arg   := IDENT
// Identifiers may be double-quoted to allow punctuation-heavy KG names. An
// argument resolves to the target, a quantified variable, or an entity name,
// in that order.
EpfoQuery parse_query(const std::string& text, const Vocab& vocab);

std::string print_query(const EpfoQuery& q, const Vocab& vocab);
std::string print_atom(const Atom& a, const std::vector<std::string>& var_names,
                       const Vocab& vocab);

// Distributes And over Or, dedups atoms inside each conjunction, and checks
// per-conjunct validity: the dependency graph must be a DAG whose sources are
// the anchors and whose unique sink is the target. Throws InvalidQuery naming
// the offending cycle or extra sink.
DnfQuery to_dnf(const EpfoQuery& q);

void validate_conjunction(const Conjunction& c, const std::vector<std::string>& var_names);

// Atom order in which every subject is an anchor or a variable resolved by an
// earlier atom; stable (ties broken by input position). Requires a valid
// conjunction.
std::vector<Atom> topo_order(const Conjunction& c);

// Variables appearing in a conjunction, ascending.
std::vector<VarId> conjunction_vars(const Conjunction& c);

}  // namespace kgq

#endif
