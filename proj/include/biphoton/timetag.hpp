#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "biphoton/error.hpp"

namespace biphoton {

/// Origin of a simulated event; kept in memory for white-box tests, never written to files.
enum class Truth : std::uint8_t { pair = 0, fluor = 1, dark = 2, thermal = 3, unknown = 4 };

inline constexpr std::uint32_t no_pair = std::numeric_limits<std::uint32_t>::max();

struct TimeTag {
    std::uint64_t timestamp_ps;
    std::uint32_t pair_id = no_pair;
    std::uint8_t channel;
    Truth truth = Truth::unknown;

    friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

inline bool tag_order(const TimeTag& a, const TimeTag& b)
{
    if (a.timestamp_ps != b.timestamp_ps) return a.timestamp_ps < b.timestamp_ps;
    if (a.channel != b.channel) return a.channel < b.channel;
    if (a.truth != b.truth) return a.truth < b.truth;
    return a.pair_id < b.pair_id;
}

/// Time-ordered two-channel detection record.
struct TimeTagStream {
    std::vector<TimeTag> events;
    /// Acquisition length; 0 when unknown.
    std::uint64_t duration_ps = 0;

    [[nodiscard]] bool is_sorted() const
    {
        return std::is_sorted(events.begin(), events.end(),
                              [](const TimeTag& a, const TimeTag& b) { return a.timestamp_ps < b.timestamp_ps; });
    }

    void sort() { std::sort(events.begin(), events.end(), tag_order); }

    [[nodiscard]] std::size_t count(std::uint8_t channel) const
    {
        return static_cast<std::size_t>(std::count_if(
            events.begin(), events.end(), [channel](const TimeTag& t) { return t.channel == channel; }));
    }

    [[nodiscard]] double duration_s() const noexcept { return static_cast<double>(duration_ps) * 1e-12; }
};

/// Binary layout, all integers little-endian:
///
///     offset 0   6 bytes  magic "BPTAGS"
///     offset 6   u16      format version (1)
///     offset 8   u64      acquisition duration in ps (0 = unknown)
///     offset 16  records of 9 bytes: u8 channel, u64 timestamp_ps
namespace tagfile {

inline constexpr std::array<char, 6> magic{'B', 'P', 'T', 'A', 'G', 'S'};
inline constexpr std::uint16_t version = 1;
inline constexpr std::size_t header_size = 16;
inline constexpr std::size_t record_size = 9;

inline void put_le(std::string& out, std::uint64_t value, int bytes)
{
    for (int i = 0; i < bytes; ++i) {
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xffu));
    }
}

inline std::uint64_t get_le(std::string_view in, std::size_t offset, int bytes)
{
    std::uint64_t value = 0;
    for (int i = 0; i < bytes; ++i) {
        value |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    }
    return value;
}

} // namespace tagfile

/// Serializes channel and timestamp only; truth tags are dropped.
inline std::string encode_tags(const TimeTagStream& stream)
{
    std::string out(tagfile::magic.begin(), tagfile::magic.end());
    tagfile::put_le(out, tagfile::version, 2);
    tagfile::put_le(out, stream.duration_ps, 8);
    out.reserve(tagfile::header_size + stream.events.size() * tagfile::record_size);
    for (const auto& e : stream.events) {
        out.push_back(static_cast<char>(e.channel));
        tagfile::put_le(out, e.timestamp_ps, 8);
    }
    return out;
}

/// Decodes the binary format. A zero-length input is an empty stream of unknown duration.
inline TimeTagStream decode_tags(std::string_view data, const std::string& source = "tags")
{
    TimeTagStream stream;
    if (data.empty()) return stream;
    if (data.size() < tagfile::header_size
        || !std::equal(tagfile::magic.begin(), tagfile::magic.end(), data.begin())) {
        throw FormatError(source + ": not a time-tag file (bad magic)");
    }
    const auto ver = tagfile::get_le(data, 6, 2);
    if (ver != tagfile::version) {
        throw FormatError(source + ": unsupported time-tag format version " + std::to_string(ver));
    }
    stream.duration_ps = tagfile::get_le(data, 8, 8);
    const std::size_t body = data.size() - tagfile::header_size;
    if (body % tagfile::record_size != 0) {
        throw FormatError(source + ": truncated record at byte "
                          + std::to_string(tagfile::header_size + body / tagfile::record_size * tagfile::record_size));
    }
    stream.events.reserve(body / tagfile::record_size);
    for (std::size_t off = tagfile::header_size; off < data.size(); off += tagfile::record_size) {
        const auto channel = static_cast<std::uint8_t>(data[off]);
        if (channel > 1) {
            throw FormatError(source + ": channel " + std::to_string(channel) + " at byte "
                              + std::to_string(off) + " is not 0 or 1");
        }
        stream.events.push_back({tagfile::get_le(data, off + 1, 8), no_pair, channel, Truth::unknown});
    }
    return stream;
}

/// CSV mirror of the binary format:
///
///     # duration_ps=<u64>
///     channel,timestamp_ps
///     0,1234567
inline std::string tags_to_csv(const TimeTagStream& stream)
{
    std::string out = "# duration_ps=" + std::to_string(stream.duration_ps) + "\nchannel,timestamp_ps\n";
    for (const auto& e : stream.events) {
        out += std::to_string(e.channel);
        out += ',';
        out += std::to_string(e.timestamp_ps);
        out += '\n';
    }
    return out;
}

inline TimeTagStream tags_from_csv(const std::string& text, const std::string& source = "tags.csv")
{
    TimeTagStream stream;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            constexpr std::string_view key = "# duration_ps=";
            if (line.rfind(key, 0) == 0) stream.duration_ps = std::stoull(line.substr(key.size()));
            continue;
        }
        if (line.rfind("channel", 0) == 0) continue;
        const auto comma = line.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument("comma");
            const auto channel = std::stoul(line.substr(0, comma));
            if (channel > 1) throw std::out_of_range("channel");
            stream.events.push_back({std::stoull(line.substr(comma + 1)), no_pair,
                                     static_cast<std::uint8_t>(channel), Truth::unknown});
        } catch (const std::exception&) {
            throw FormatError(source + ":" + std::to_string(line_no) + ": expected 'channel,timestamp_ps'");
        }
    }
    return stream;
}

} // namespace biphoton
