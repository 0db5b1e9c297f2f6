#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace omdt {

enum class VarKind { Binary, Continuous };
enum class Relation { LessEqual, Equal, GreaterEqual };
enum class Sense { Maximize, Minimize };

struct Variable {
  std::string name;
  VarKind kind = VarKind::Continuous;
  double lower = 0.0;
  double upper = 0.0;
  double objective = 0.0;
  bool operator==(const Variable&) const = default;
};

struct Term {
  std::size_t var = 0;
  double coef = 0.0;
  bool operator==(const Term&) const = default;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;
  Relation relation = Relation::LessEqual;
  double rhs = 0.0;
  bool operator==(const Constraint&) const = default;
};

/// Solver-agnostic mixed-integer linear program.
class MilpModel {
 public:
  std::string name = "model";
  Sense sense = Sense::Maximize;

  std::size_t add_variable(std::string name, VarKind kind, double lower, double upper,
                           double objective = 0.0);
  std::size_t add_binary(std::string name, double objective = 0.0) {
    return add_variable(std::move(name), VarKind::Binary, 0.0, 1.0, objective);
  }
  /// Terms are sorted by variable and duplicates merged.
  std::size_t add_constraint(std::string name, std::vector<Term> terms, Relation relation, double rhs);

  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<Constraint>& constraints() const { return cons_; }
  std::size_t n_variables() const { return vars_.size(); }
  std::size_t n_constraints() const { return cons_.size(); }
  std::size_t n_binaries() const;
  std::size_t n_nonzeros() const;
  std::optional<std::size_t> find_variable(const std::string& name) const;
  std::optional<std::size_t> find_constraint(const std::string& name) const;
  Variable& variable(std::size_t i) { return vars_.at(i); }

  /// Lists broken model invariants; empty when the model is well formed.
  std::vector<std::string> check() const;

  double objective_value(std::span<const double> values) const;
  /// Largest violation over constraints and bounds.
  double max_violation(std::span<const double> values) const;

  bool operator==(const MilpModel& other) const {
    return name == other.name && sense == other.sense && vars_ == other.vars_ && cons_ == other.cons_;
  }

 private:
  std::vector<Variable> vars_;
  std::vector<Constraint> cons_;
  std::unordered_map<std::string, std::size_t> var_index_;
  std::unordered_map<std::string, std::size_t> con_index_;
};

}  // namespace omdt
