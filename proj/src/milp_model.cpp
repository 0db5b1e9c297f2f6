#include "omdt/milp_model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "omdt/error.hpp"

namespace omdt {

std::size_t MilpModel::add_variable(std::string name, VarKind kind, double lower, double upper,
                                    double objective) {
  if (var_index_.contains(name)) throw InvalidArgument(fmt::format("duplicate variable '{}'", name));
  const std::size_t id = vars_.size();
  var_index_.emplace(name, id);
  vars_.push_back({std::move(name), kind, lower, upper, objective});
  return id;
}

std::size_t MilpModel::add_constraint(std::string name, std::vector<Term> terms, Relation relation,
                                      double rhs) {
  if (con_index_.contains(name)) throw InvalidArgument(fmt::format("duplicate constraint '{}'", name));
  for (const auto& t : terms)
    if (t.var >= vars_.size())
      throw InvalidArgument(fmt::format("constraint '{}' references undeclared variable {}", name, t.var));
  std::stable_sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.var < b.var; });
  std::vector<Term> merged;
  merged.reserve(terms.size());
  for (const auto& t : terms) {
    if (!merged.empty() && merged.back().var == t.var) merged.back().coef += t.coef;
    else merged.push_back(t);
  }
  std::erase_if(merged, [](const Term& t) { return t.coef == 0.0; });
  const std::size_t id = cons_.size();
  con_index_.emplace(name, id);
  cons_.push_back({std::move(name), std::move(merged), relation, rhs});
  return id;
}

std::size_t MilpModel::n_binaries() const {
  return static_cast<std::size_t>(
      std::count_if(vars_.begin(), vars_.end(), [](const Variable& v) { return v.kind == VarKind::Binary; }));
}

std::size_t MilpModel::n_nonzeros() const {
  std::size_t n = 0;
  for (const auto& c : cons_) n += c.terms.size();
  return n;
}

std::optional<std::size_t> MilpModel::find_variable(const std::string& name) const {
  const auto it = var_index_.find(name);
  if (it == var_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> MilpModel::find_constraint(const std::string& name) const {
  const auto it = con_index_.find(name);
  if (it == con_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> MilpModel::check() const {
  std::vector<std::string> out;
  if (var_index_.size() != vars_.size()) out.push_back("variable names are not unique");
  if (con_index_.size() != cons_.size()) out.push_back("constraint names are not unique");
  for (const auto& v : vars_) {
    if (v.kind == VarKind::Binary && (v.lower != 0.0 || v.upper != 1.0))
      out.push_back(fmt::format("binary '{}' has bounds [{}, {}]", v.name, v.lower, v.upper));
    if (v.lower > v.upper) out.push_back(fmt::format("variable '{}' has empty bounds", v.name));
    if (!std::isfinite(v.objective)) out.push_back(fmt::format("variable '{}' has a non-finite cost", v.name));
  }
  for (const auto& c : cons_)
    for (const auto& t : c.terms)
      if (t.var >= vars_.size() || !std::isfinite(t.coef))
        out.push_back(fmt::format("constraint '{}' has an invalid term", c.name));
  return out;
}

double MilpModel::objective_value(std::span<const double> values) const {
  if (values.size() != vars_.size()) throw InvalidArgument("objective_value: assignment size mismatch");
  double obj = 0.0;
  for (std::size_t i = 0; i < vars_.size(); ++i) obj += vars_[i].objective * values[i];
  return obj;
}

double MilpModel::max_violation(std::span<const double> values) const {
  if (values.size() != vars_.size()) throw InvalidArgument("max_violation: assignment size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    worst = std::max(worst, vars_[i].lower - values[i]);
    worst = std::max(worst, values[i] - vars_[i].upper);
  }
  for (const auto& c : cons_) {
    double lhs = 0.0;
    for (const auto& t : c.terms) lhs += t.coef * values[t.var];
    switch (c.relation) {
      case Relation::LessEqual: worst = std::max(worst, lhs - c.rhs); break;
      case Relation::GreaterEqual: worst = std::max(worst, c.rhs - lhs); break;
      case Relation::Equal: worst = std::max(worst, std::abs(lhs - c.rhs)); break;
    }
  }
  return worst;
}

}  // namespace omdt
