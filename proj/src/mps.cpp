#include "omdt/mps.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "omdt/error.hpp"
#include "omdt/mdp_io.hpp"

namespace omdt {

namespace {

constexpr std::string_view kObjRow = "obj";

std::string num(double v) { return fmt::format("{:.17g}", v); }

char row_type(Relation r) {
  switch (r) {
    case Relation::LessEqual: return 'L';
    case Relation::GreaterEqual: return 'G';
    case Relation::Equal: return 'E';
  }
  return 'E';
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double to_double(std::string_view s, std::size_t line_no) {
  const std::string str(s);
  char* end = nullptr;
  const double v = std::strtod(str.c_str(), &end);
  if (end == str.c_str() || *end != '\0') throw ParseError(fmt::format("mps line {}: bad number '{}'", line_no, s));
  return v;
}

}  // namespace

std::string format_mps(const MilpModel& model) {
  const auto& vars = model.variables();
  const auto& cons = model.constraints();
  std::vector<std::vector<std::pair<std::size_t, double>>> columns(vars.size());
  for (std::size_t r = 0; r < cons.size(); ++r)
    for (const auto& t : cons[r].terms) columns[t.var].emplace_back(r, t.coef);

  std::string out;
  out.reserve(64 * (vars.size() + model.n_nonzeros()));
  out += fmt::format("NAME {}\nOBJSENSE\n    {}\nROWS\n N  {}\n", model.name,
                     model.sense == Sense::Maximize ? "MAX" : "MIN", kObjRow);
  for (const auto& c : cons) out += fmt::format(" {}  {}\n", row_type(c.relation), c.name);
  out += "COLUMNS\n";
  bool in_int = false;
  int marker = 0;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const bool is_int = vars[i].kind == VarKind::Binary;
    if (is_int != in_int) {
      out += fmt::format("    MARKER{} 'MARKER' '{}'\n", marker++, is_int ? "INTORG" : "INTEND");
      in_int = is_int;
    }
    if (vars[i].objective != 0.0 || columns[i].empty())
      out += fmt::format("    {} {} {}\n", vars[i].name, kObjRow, num(vars[i].objective));
    for (auto [r, coef] : columns[i]) out += fmt::format("    {} {} {}\n", vars[i].name, cons[r].name, num(coef));
  }
  if (in_int) out += fmt::format("    MARKER{} 'MARKER' 'INTEND'\n", marker++);
  out += "RHS\n";
  for (const auto& c : cons)
    if (c.rhs != 0.0) out += fmt::format("    RHS {} {}\n", c.name, num(c.rhs));
  out += "BOUNDS\n";
  for (const auto& v : vars) {
    if (v.kind == VarKind::Binary) {
      out += fmt::format(" BV BND {}\n", v.name);
      continue;
    }
    if (v.lower == v.upper) {
      out += fmt::format(" FX BND {} {}\n", v.name, num(v.lower));
      continue;
    }
    if (v.lower == -std::numeric_limits<double>::infinity()) out += fmt::format(" MI BND {}\n", v.name);
    else if (v.lower != 0.0) out += fmt::format(" LO BND {} {}\n", v.name, num(v.lower));
    if (v.upper != std::numeric_limits<double>::infinity()) out += fmt::format(" UP BND {} {}\n", v.name, num(v.upper));
  }
  out += "ENDATA\n";
  return out;
}

void export_mps(const MilpModel& model, const std::filesystem::path& path) {
  write_text_file(path, format_mps(model));
}

MilpModel parse_mps(std::string_view text) {
  enum class Section { None, Name, ObjSense, Rows, Columns, Rhs, Bounds, End };
  Section section = Section::None;
  MilpModel model;
  std::string obj_row;
  struct Row {
    std::string name;
    Relation rel;
    std::vector<Term> terms;
    double rhs = 0.0;
  };
  std::vector<Row> rows;
  std::unordered_map<std::string, std::size_t> row_index;
  struct Col {
    std::string name;
    bool integer = false;
    bool bv = false;
    double obj = 0.0;
    double lo = 0.0, up = std::numeric_limits<double>::infinity();
    bool up_set = false;
  };
  std::vector<Col> cols;
  std::unordered_map<std::string, std::size_t> col_index;
  bool in_int = false;

  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '*') continue;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (!std::isspace(static_cast<unsigned char>(line[0]))) {
      const std::string_view head = tok[0];
      if (head == "NAME") {
        section = Section::Name;
        model.name = tok.size() > 1 ? std::string(tok[1]) : "";
      } else if (head == "OBJSENSE") {
        section = Section::ObjSense;
        if (tok.size() > 1) model.sense = tok[1] == "MAX" || tok[1] == "MAXIMIZE" ? Sense::Maximize : Sense::Minimize;
      } else if (head == "ROWS") section = Section::Rows;
      else if (head == "COLUMNS") section = Section::Columns;
      else if (head == "RHS") section = Section::Rhs;
      else if (head == "BOUNDS") section = Section::Bounds;
      else if (head == "ENDATA") section = Section::End;
      else throw ParseError(fmt::format("mps line {}: unsupported section '{}'", line_no, head));
      continue;
    }
    switch (section) {
      case Section::ObjSense:
        model.sense = tok[0] == "MAX" || tok[0] == "MAXIMIZE" ? Sense::Maximize : Sense::Minimize;
        break;
      case Section::Rows: {
        if (tok.size() != 2) throw ParseError(fmt::format("mps line {}: malformed row", line_no));
        const std::string name(tok[1]);
        if (tok[0] == "N") {
          if (obj_row.empty()) obj_row = name;
          break;
        }
        Relation rel;
        if (tok[0] == "L") rel = Relation::LessEqual;
        else if (tok[0] == "G") rel = Relation::GreaterEqual;
        else if (tok[0] == "E") rel = Relation::Equal;
        else throw ParseError(fmt::format("mps line {}: bad row type '{}'", line_no, tok[0]));
        if (!row_index.emplace(name, rows.size()).second)
          throw ParseError(fmt::format("mps line {}: duplicate row '{}'", line_no, name));
        rows.push_back({name, rel, {}, 0.0});
        break;
      }
      case Section::Columns: {
        if (tok.size() >= 3 && tok[1] == "'MARKER'") {
          if (tok[2] == "'INTORG'") in_int = true;
          else if (tok[2] == "'INTEND'") in_int = false;
          else throw ParseError(fmt::format("mps line {}: bad marker", line_no));
          break;
        }
        if (tok.size() != 3 && tok.size() != 5) throw ParseError(fmt::format("mps line {}: malformed column entry", line_no));
        const std::string cname(tok[0]);
        auto [it, inserted] = col_index.try_emplace(cname, cols.size());
        if (inserted) {
          cols.push_back({cname});
          cols.back().integer = in_int;
        }
        const std::size_t ci = it->second;
        for (std::size_t p = 1; p + 1 < tok.size(); p += 2) {
          const std::string rname(tok[p]);
          const double v = to_double(tok[p + 1], line_no);
          if (rname == obj_row) {
            cols[ci].obj = v;
            continue;
          }
          const auto r = row_index.find(rname);
          if (r == row_index.end()) throw ParseError(fmt::format("mps line {}: unknown row '{}'", line_no, rname));
          rows[r->second].terms.push_back({ci, v});
        }
        break;
      }
      case Section::Rhs: {
        if (tok.size() != 3 && tok.size() != 5) throw ParseError(fmt::format("mps line {}: malformed rhs", line_no));
        for (std::size_t p = 1; p + 1 < tok.size(); p += 2) {
          const std::string rname(tok[p]);
          if (rname == obj_row) continue;
          const auto r = row_index.find(rname);
          if (r == row_index.end()) throw ParseError(fmt::format("mps line {}: unknown row '{}'", line_no, rname));
          rows[r->second].rhs = to_double(tok[p + 1], line_no);
        }
        break;
      }
      case Section::Bounds: {
        if (tok.size() < 3) throw ParseError(fmt::format("mps line {}: malformed bound", line_no));
        const auto c = col_index.find(std::string(tok[2]));
        if (c == col_index.end()) throw ParseError(fmt::format("mps line {}: unknown column '{}'", line_no, tok[2]));
        Col& col = cols[c->second];
        const std::string_view type = tok[0];
        const auto value = [&] {
          if (tok.size() < 4) throw ParseError(fmt::format("mps line {}: bound needs a value", line_no));
          return to_double(tok[3], line_no);
        };
        if (type == "BV") {
          col.bv = true;
          col.lo = 0.0;
          col.up = 1.0;
        } else if (type == "UP") {
          col.up = value();
          col.up_set = true;
        } else if (type == "LO") col.lo = value();
        else if (type == "FX") col.lo = col.up = value();
        else if (type == "MI") col.lo = -std::numeric_limits<double>::infinity();
        else if (type == "PL") col.up = std::numeric_limits<double>::infinity();
        else if (type == "FR") {
          col.lo = -std::numeric_limits<double>::infinity();
          col.up = std::numeric_limits<double>::infinity();
        } else throw ParseError(fmt::format("mps line {}: unsupported bound type '{}'", line_no, type));
        break;
      }
      case Section::End: break;
      default: throw ParseError(fmt::format("mps line {}: data outside a section", line_no));
    }
  }
  if (section != Section::End) throw ParseError("mps: missing ENDATA");

  for (const auto& c : cols) {
    const bool binary = c.bv || (c.integer && c.lo == 0.0 && (c.up == 1.0 || !c.up_set));
    if (c.integer && !binary) throw ParseError(fmt::format("mps: general integer column '{}' is not supported", c.name));
    if (binary) model.add_binary(c.name, c.obj);
    else model.add_variable(c.name, VarKind::Continuous, c.lo, c.up, c.obj);
  }
  for (auto& r : rows) model.add_constraint(r.name, std::move(r.terms), r.rel, r.rhs);
  return model;
}

MilpModel read_mps(const std::filesystem::path& path) { return parse_mps(read_text_file(path)); }

}  // namespace omdt
