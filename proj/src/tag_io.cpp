#include "entsim/tag_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "entsim/errors.hpp"

namespace entsim::io {

namespace {

constexpr std::array<char, 4> kMagic{'T', 'T', 'A', 'G'};
constexpr unsigned char kVersion = 0x01;

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::vector<TimeTagStream> to_streams(std::map<int, std::vector<TimePs>>& by_channel, double duration_s) {
  std::vector<TimeTagStream> out;
  for (auto& [ch, tags] : by_channel) {
    std::sort(tags.begin(), tags.end());
    out.push_back({static_cast<std::uint8_t>(ch), std::move(tags), duration_s});
  }
  return out;
}

struct Record {
  TimePs t;
  std::uint8_t channel;
  bool operator<(const Record& o) const { return t != o.t ? t < o.t : channel < o.channel; }
};

std::vector<Record> merged(const std::vector<TimeTagStream>& streams) {
  std::vector<Record> rec;
  for (const auto& s : streams)
    for (TimePs t : s.tags_ps) {
      if (t < 0) throw IoError("negative time tag cannot be exported");
      rec.push_back({t, s.channel_id});
    }
  std::sort(rec.begin(), rec.end());
  return rec;
}

}  // namespace

void write_tags_csv(const std::filesystem::path& path, const std::vector<TimeTagStream>& streams) {
  std::string out = "channel,t_ps\n";
  for (const auto& r : merged(streams)) out += fmt::format("{},{}\n", static_cast<int>(r.channel), r.t);
  write_file_atomic(path, out);
}

std::vector<TimeTagStream> read_tags_csv(const std::filesystem::path& path, double duration_s) {
  const std::string text = read_all(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "channel,t_ps") throw IoError(path.string() + ": expected header 'channel,t_ps'");

  std::map<int, std::vector<TimePs>> by_channel;
  TimePs last = -1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    int ch = 0;
    TimePs t = 0;
    const char* b = line.data();
    const char* e = b + line.size();
    bool ok = comma != std::string::npos;
    if (ok) {
      auto r1 = std::from_chars(b, b + comma, ch);
      auto r2 = std::from_chars(b + comma + 1, e, t);
      ok = r1.ec == std::errc() && r1.ptr == b + comma && r2.ec == std::errc() && r2.ptr == e;
    }
    if (!ok || ch < 0 || ch > 255 || t < 0)
      throw IoError(fmt::format("{}:{}: malformed record '{}'", path.string(), lineno, line));
    by_channel[ch].push_back(t);
    last = std::max(last, t);
  }
  if (duration_s <= 0.0) duration_s = ps_to_seconds(static_cast<double>(last + 1));
  return to_streams(by_channel, duration_s);
}

void write_tags_binary(const std::filesystem::path& path, const std::vector<TimeTagStream>& streams) {
  std::string out(kMagic.begin(), kMagic.end());
  out.push_back(static_cast<char>(kVersion));
  double duration_s = 0.0;
  for (const auto& s : streams) duration_s = std::max(duration_s, s.duration_s);
  for (const auto& r : merged(streams)) {
    out.push_back(static_cast<char>(r.channel));
    put_u64(out, static_cast<std::uint64_t>(r.t));
  }
  put_u64(out, static_cast<std::uint64_t>(std::llround(seconds_to_ps(duration_s))));
  write_file_atomic(path, out);
}

std::vector<TimeTagStream> read_tags_binary(const std::filesystem::path& path) {
  const std::string data = read_all(path);
  if (data.size() < 13 || !std::equal(kMagic.begin(), kMagic.end(), data.begin()))
    throw IoError(path.string() + ": not a TTAG file");
  if (static_cast<unsigned char>(data[4]) != kVersion)
    throw IoError(fmt::format("{}: unsupported TTAG version {}", path.string(), static_cast<int>(data[4])));
  const std::size_t body = data.size() - 5 - 8;
  if (body % 9 != 0) throw IoError(path.string() + ": truncated TTAG record");

  std::map<int, std::vector<TimePs>> by_channel;
  for (std::size_t at = 5; at < 5 + body; at += 9) {
    const int ch = static_cast<unsigned char>(data[at]);
    by_channel[ch].push_back(static_cast<TimePs>(get_u64(data, at + 1)));
  }
  const double duration_s = ps_to_seconds(static_cast<double>(get_u64(data, 5 + body)));
  return to_streams(by_channel, duration_s);
}

std::vector<TimeTagStream> read_tags(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, 4> head{};
  in.read(head.data(), 4);
  if (in.gcount() == 4 && head == kMagic) return read_tags_binary(path);
  return read_tags_csv(path);
}

std::string histogram_csv(const Histogram& hist) {
  std::string out = "bin_center_ps,counts\n";
  for (std::size_t i = 0; i < hist.size(); ++i) out += fmt::format("{},{}\n", hist.bin_center(i), hist.counts[i]);
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace entsim::io
