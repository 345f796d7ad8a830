#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "decompound/posterior.hpp"
#include "decompound/simulate.hpp"
#include "json.hpp"

namespace decompound::io {

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames, so readers never see a torn file.
void write_file(const std::filesystem::path& path, std::string_view content);

/// Git-style blob hash: SHA-1 of "blob <size>\0" followed by the content, as hex.
std::string blob_sha1(std::string_view content);

/// Header z1,...,zd then one row per increment with %.17g values.
std::string format_increments_csv(const IncrementSample& sample);
/// A header-only file is an empty sample of that dimension.
IncrementSample parse_increments_csv(std::string_view text, double mesh);

/// Stable JSON text: two-space indent and a trailing newline.
std::string dump_json(const nlohmann::json& j);

/// Columns x1[,x2],mean,lower,upper.
std::string format_density_csv(const DensityBand& band);

/// One record per retained draw: iter, lambda, jump_count_total, mixture, log_post.
std::string format_chain_jsonl(const ChainOutput& output);

}  // namespace decompound::io
