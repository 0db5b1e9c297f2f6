#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "omdt/milp_model.hpp"

namespace omdt {

/// Free-format MPS with an OBJSENSE section, binaries declared BV.
std::string format_mps(const MilpModel& model);
void export_mps(const MilpModel& model, const std::filesystem::path& path);

/// Parses free-format MPS (as written by format_mps; RANGES are rejected).
MilpModel parse_mps(std::string_view text);
MilpModel read_mps(const std::filesystem::path& path);

}  // namespace omdt
