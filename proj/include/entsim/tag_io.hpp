#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "entsim/timetag.hpp"

namespace entsim::io {

/// CSV with header `channel,t_ps`. The CSV form carries no duration; the
/// reader sets it to one picosecond past the last tag unless given.
void write_tags_csv(const std::filesystem::path& path, const std::vector<TimeTagStream>& streams);
std::vector<TimeTagStream> read_tags_csv(const std::filesystem::path& path, double duration_s = 0.0);

/// Binary: "TTAG", version 0x01, records of (u8 channel, u64 ps) little
/// endian, then a u64 duration footer in ps. Records of all channels are
/// merged in time order on write.
void write_tags_binary(const std::filesystem::path& path, const std::vector<TimeTagStream>& streams);
std::vector<TimeTagStream> read_tags_binary(const std::filesystem::path& path);

/// Picks the reader from the first four bytes.
std::vector<TimeTagStream> read_tags(const std::filesystem::path& path);

/// Header `bin_center_ps,counts`.
std::string histogram_csv(const Histogram& hist);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace entsim::io
