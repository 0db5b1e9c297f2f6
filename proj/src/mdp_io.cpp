#include "omdt/mdp_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "omdt/error.hpp"

namespace omdt {

namespace {

constexpr std::string_view kFormat = "omdt-mdp/1";

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

std::string quoted_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + quoted(items[i]);
  return out + "]";
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Everything except the checksum line, in a fixed layout.
std::string body(const TabularMdp& mdp, const FeatureMatrix& features) {
  std::string out;
  out += fmt::format("  \"format\": \"{}\",\n", kFormat);
  out += fmt::format("  \"name\": {},\n", quoted(mdp.name));
  out += fmt::format("  \"gamma\": {},\n", num(mdp.gamma));
  out += fmt::format("  \"n_states\": {},\n  \"n_actions\": {},\n", mdp.n_states, mdp.n_actions);
  out += "  \"p0\": [";
  bool first = true;
  for (std::size_t s = 0; s < mdp.p0.size(); ++s) {
    if (mdp.p0[s] == 0.0) continue;
    out += fmt::format("{}[{}, {}]", first ? "" : ", ", s, num(mdp.p0[s]));
    first = false;
  }
  out += "],\n  \"transitions\": [\n";
  first = true;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a)
      for (const auto& t : mdp.outcomes(s, a)) {
        out += fmt::format("{}    [{}, {}, {}, {}, {}]", first ? "" : ",\n", s, a, t.next, num(t.prob),
                           num(t.reward));
        first = false;
      }
  out += "\n  ],\n";
  out += fmt::format("  \"feature_names\": {},\n", quoted_list(features.names));
  out += "  \"features\": [\n";
  for (std::size_t i = 0; i < features.n_rows; ++i) {
    out += "    [";
    for (std::size_t j = 0; j < features.n_cols; ++j) out += (j ? ", " : "") + num(features(i, j));
    out += i + 1 < features.n_rows ? "],\n" : "]\n";
  }
  out += "  ],\n";
  out += fmt::format("  \"state_labels\": {},\n", quoted_list(mdp.state_labels));
  out += fmt::format("  \"action_labels\": {},\n", quoted_list(mdp.action_labels));
  return out;
}

}  // namespace

std::string format_mdp(const TabularMdp& mdp, const FeatureMatrix& features) {
  if (features.n_rows != mdp.n_states)
    throw InvalidArgument("format_mdp: feature rows do not match n_states");
  const std::string b = body(mdp, features);
  return fmt::format("{{\n{}  \"checksum\": \"fnv1a64:{:016x}\"\n}}\n", b, fnv1a(b));
}

Environment parse_mdp(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("mdp file: {}", e.what()));
  }
  Environment env;
  try {
    if (doc.at("format") != kFormat) throw ParseError("mdp file: unsupported format");
    const auto n_states = doc.at("n_states").get<std::size_t>();
    const auto n_actions = doc.at("n_actions").get<std::size_t>();
    if (n_states == 0 || n_actions == 0) throw ParseError("mdp file: empty state or action set");
    TabularMdp mdp(n_states, n_actions, doc.at("gamma").get<double>());
    mdp.name = doc.at("name").get<std::string>();
    for (const auto& e : doc.at("p0")) {
      const auto s = e.at(0).get<std::size_t>();
      if (s >= n_states) throw ParseError(fmt::format("mdp file: p0 index {} out of range", s));
      mdp.p0[s] = e.at(1).get<double>();
    }
    for (const auto& e : doc.at("transitions")) {
      const auto s = e.at(0).get<std::size_t>();
      const auto a = e.at(1).get<std::size_t>();
      const auto next = e.at(2).get<std::size_t>();
      if (s >= n_states || a >= n_actions || next >= n_states)
        throw ParseError(fmt::format("mdp file: transition ({}, {}, {}) out of range", s, a, next));
      mdp.row(s, a).push_back({next, e.at(3).get<double>(), e.at(4).get<double>()});
    }
    mdp.state_labels = doc.value("state_labels", std::vector<std::string>{});
    mdp.action_labels = doc.value("action_labels", std::vector<std::string>{});

    FeatureMatrix features(n_states, doc.at("feature_names").get<std::vector<std::string>>());
    const auto& rows = doc.at("features");
    if (rows.size() != n_states) throw ParseError("mdp file: feature row count differs from n_states");
    for (std::size_t i = 0; i < n_states; ++i) {
      if (rows[i].size() != features.n_cols)
        throw ParseError(fmt::format("mdp file: feature row {} has the wrong width", i));
      for (std::size_t j = 0; j < features.n_cols; ++j) features(i, j) = rows[i][j].get<double>();
    }

    const std::string expected = fmt::format("fnv1a64:{:016x}", fnv1a(body(mdp, features)));
    if (doc.contains("checksum") && doc.at("checksum").get<std::string>() != expected)
      throw ParseError("mdp file: checksum mismatch");
    env = {std::move(mdp), std::move(features)};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("mdp file: {}", e.what()));
  }
  const auto problems = validate(env.mdp);
  if (!problems.empty()) throw ParseError(fmt::format("mdp file: invalid MDP: {}", problems.front()));
  return env;
}

void write_mdp_file(const TabularMdp& mdp, const FeatureMatrix& features,
                    const std::filesystem::path& path) {
  write_text_file(path, format_mdp(mdp, features));
}

Environment read_mdp_file(const std::filesystem::path& path) { return parse_mdp(read_text_file(path)); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", tmp.string()));
    out << text;
    if (!out.flush()) throw Error(fmt::format("write failed for {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace omdt
