#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "omdt/envs.hpp"

namespace omdt {

/// JSON document: name, gamma, n_states, n_actions, sparse p0, transition
/// records [s, a, s', p, r], row-major features, labels and a checksum of the
/// body. Numbers are printed with 17 significant digits.
std::string format_mdp(const TabularMdp& mdp, const FeatureMatrix& features);

/// Parses format_mdp output; throws ParseError on malformed text, checksum
/// mismatch or an MDP that fails validate().
Environment parse_mdp(std::string_view text);

void write_mdp_file(const TabularMdp& mdp, const FeatureMatrix& features,
                    const std::filesystem::path& path);
Environment read_mdp_file(const std::filesystem::path& path);

/// Reads a whole file; throws Error when it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames it into place.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace omdt
