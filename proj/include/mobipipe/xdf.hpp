#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mobipipe/common.hpp"
#include "mobipipe/csv.hpp"

namespace mobipipe {

enum class StreamKind { EEG, Pose, IMU, Marker };

enum class ChannelFormat { Float32, Double64, String };

inline const char* to_string(StreamKind k) {
  switch (k) {
    case StreamKind::EEG: return "EEG";
    case StreamKind::Pose: return "Pose";
    case StreamKind::IMU: return "IMU";
    case StreamKind::Marker: return "Marker";
  }
  return "?";
}

inline const char* to_string(ChannelFormat f) {
  switch (f) {
    case ChannelFormat::Float32: return "float32";
    case ChannelFormat::Double64: return "double64";
    case ChannelFormat::String: return "string";
  }
  return "?";
}

struct StreamInfo {
  std::uint32_t stream_id = 0;
  std::string name;
  StreamKind kind = StreamKind::Marker;
  double nominal_rate = 0.0;  // Hz; 0 for irregular streams
  std::vector<std::string> channel_labels;
  ChannelFormat channel_format = ChannelFormat::Float32;

  std::size_t channel_count() const { return channel_labels.size(); }

  bool operator==(const StreamInfo& o) const {
    return stream_id == o.stream_id && name == o.name && kind == o.kind &&
           nominal_rate == o.nominal_rate &&
           channel_labels == o.channel_labels &&
           channel_format == o.channel_format;
  }
};

struct ClockOffsetSample {
  double collection_time = 0.0;
  double offset = 0.0;
  bool operator==(const ClockOffsetSample&) const = default;
};

// One multichannel time series. `samples` is n_samples x n_channels in
// stream order; a NaN timestamp means the sample carried none in the file
// (reconstructed later by dejittering). String-format streams keep their
// per-sample text in `text` and leave `samples` empty.
struct TimedStream {
  StreamInfo info;
  Eigen::MatrixXd samples;     // [n_samples x n_channels]
  Eigen::VectorXd timestamps;  // seconds, session clock; NaN = absent
  std::vector<std::string> text;
  std::vector<ClockOffsetSample> clock_offsets;

  Eigen::Index n_samples() const { return timestamps.size(); }
};

inline bool same_double_bits(double a, double b) {
  std::uint64_t ba, bb;
  std::memcpy(&ba, &a, 8);
  std::memcpy(&bb, &b, 8);
  return ba == bb || (std::isnan(a) && std::isnan(b));
}

inline bool operator==(const TimedStream& a, const TimedStream& b) {
  if (!(a.info == b.info) || a.text != b.text ||
      a.clock_offsets != b.clock_offsets)
    return false;
  if (a.timestamps.size() != b.timestamps.size() ||
      a.samples.rows() != b.samples.rows() ||
      a.samples.cols() != b.samples.cols())
    return false;
  for (Eigen::Index i = 0; i < a.timestamps.size(); ++i)
    if (!same_double_bits(a.timestamps[i], b.timestamps[i])) return false;
  for (Eigen::Index i = 0; i < a.samples.size(); ++i)
    if (!same_double_bits(a.samples.data()[i], b.samples.data()[i]))
      return false;
  return true;
}

struct TrialOutcome {
  int trial_index = 0;
  bool hit = false;
  bool operator==(const TrialOutcome&) const = default;
};

struct RecordingSet {
  std::vector<TimedStream> streams;
  std::string participant_id;
  std::vector<TrialOutcome> outcomes;

  bool operator==(const RecordingSet& o) const {
    return streams == o.streams && participant_id == o.participant_id &&
           outcomes == o.outcomes;
  }

  // The pipeline needs at most one stream per kind.
  const TimedStream* find_kind(StreamKind k) const {
    const TimedStream* found = nullptr;
    for (const auto& s : streams) {
      if (s.info.kind != k) continue;
      if (found)
        throw InvariantError(std::string("multiple streams of kind ") +
                             to_string(k));
      found = &s;
    }
    return found;
  }
};

namespace xdf_detail {

constexpr std::uint16_t kTagFileHeader = 1;
constexpr std::uint16_t kTagStreamHeader = 2;
constexpr std::uint16_t kTagSamples = 3;
constexpr std::uint16_t kTagClockOffset = 4;
constexpr std::uint16_t kTagBoundary = 5;
constexpr std::uint16_t kTagStreamFooter = 6;

// ---- byte-level reader with hard bounds ----

struct Reader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;
  std::size_t base = 0;  // absolute offset of data[0] in the file

  std::size_t abs() const { return base + pos; }
  std::size_t remaining() const { return size - pos; }

  void need(std::size_t n) const {
    if (size - pos < n)
      throw TruncationError("unexpected end of data", base + size);
  }

  std::uint8_t u8() {
    need(1);
    return data[pos++];
  }

  std::uint64_t le(std::size_t nbytes) {
    need(nbytes);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < nbytes; ++i)
      v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
    pos += nbytes;
    return v;
  }

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }

  double f64() {
    const std::uint64_t bits = le(8);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }

  // [1 byte size in {1,4,8}][little-endian unsigned of that size]
  std::uint64_t sized_uint(const char* what) {
    const std::uint8_t nb = u8();
    if (nb != 1 && nb != 4 && nb != 8)
      throw FormatError(std::string("bad length-size byte for ") + what +
                        ": " + std::to_string(nb));
    return le(nb);
  }

  Reader sub(std::size_t n) {
    need(n);
    Reader r{data + pos, n, 0, base + pos};
    pos += n;
    return r;
  }
};

struct Writer {
  std::string out;

  void u8(std::uint8_t v) { out.push_back(static_cast<char>(v)); }

  void le(std::uint64_t v, std::size_t nbytes) {
    for (std::size_t i = 0; i < nbytes; ++i)
      out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }

  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    le(bits, 8);
  }

  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    le(bits, 4);
  }

  void bytes(const std::string& s) { out += s; }

  void sized_uint(std::uint64_t v) {
    if (v <= 0xff) {
      u8(1);
      le(v, 1);
    } else if (v <= 0xffffffffULL) {
      u8(4);
      le(v, 4);
    } else {
      u8(8);
      le(v, 8);
    }
  }

  void chunk(std::uint16_t tag, const std::string& payload) {
    sized_uint(payload.size() + 2);
    u16(tag);
    bytes(payload);
  }
};

// ---- minimal XML helpers (only the canonical subset this writer emits) ----

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      default: o += c;
    }
  }
  return o;
}

inline std::string xml_unescape(const std::string& s) {
  std::string o;
  for (std::size_t i = 0; i < s.size();) {
    if (s.compare(i, 5, "&amp;") == 0) {
      o += '&';
      i += 5;
    } else if (s.compare(i, 4, "&lt;") == 0) {
      o += '<';
      i += 4;
    } else if (s.compare(i, 4, "&gt;") == 0) {
      o += '>';
      i += 4;
    } else {
      o += s[i++];
    }
  }
  return o;
}

inline std::optional<std::string> xml_text(const std::string& xml,
                                           const std::string& tag,
                                           std::size_t from = 0) {
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  const auto a = xml.find(open, from);
  if (a == std::string::npos) return std::nullopt;
  const auto b = xml.find(close, a + open.size());
  if (b == std::string::npos) return std::nullopt;
  return xml_unescape(xml.substr(a + open.size(), b - a - open.size()));
}

inline std::vector<std::string> xml_all(const std::string& xml,
                                        const std::string& tag) {
  std::vector<std::string> out;
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  std::size_t from = 0;
  for (;;) {
    const auto a = xml.find(open, from);
    if (a == std::string::npos) break;
    const auto b = xml.find(close, a + open.size());
    if (b == std::string::npos) break;
    out.push_back(xml_unescape(xml.substr(a + open.size(), b - a - open.size())));
    from = b + close.size();
  }
  return out;
}

inline StreamKind kind_from_type(const std::string& type, Log* log) {
  std::string t;
  for (char c : type) t += static_cast<char>(std::tolower(c));
  if (t.find("eeg") != std::string::npos) return StreamKind::EEG;
  if (t.find("pose") != std::string::npos || t.find("mocap") != std::string::npos ||
      t.find("pld") != std::string::npos)
    return StreamKind::Pose;
  if (t.find("accel") != std::string::npos || t.find("imu") != std::string::npos ||
      t.find("motion") != std::string::npos)
    return StreamKind::IMU;
  if (t.find("marker") != std::string::npos) return StreamKind::Marker;
  log_warn(log, "unrecognized stream type '" + type + "', treating as Marker");
  return StreamKind::Marker;
}

inline const char* type_from_kind(StreamKind k) {
  switch (k) {
    case StreamKind::EEG: return "EEG";
    case StreamKind::Pose: return "Pose";
    case StreamKind::IMU: return "IMU";
    case StreamKind::Marker: return "Markers";
  }
  return "Markers";
}

inline std::string format_rate(double rate) {
  // Canonical shortest text form so the writer stays deterministic.
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", rate);
  double back = std::strtod(buf, nullptr);
  for (int prec = 1; prec < 17; ++prec) {
    char b2[40];
    std::snprintf(b2, sizeof(b2), "%.*g", prec, rate);
    if (std::strtod(b2, nullptr) == back) return b2;
  }
  return buf;
}

}  // namespace xdf_detail

// ---------------------------------------------------------------------------
// parse_xdf
// ---------------------------------------------------------------------------

inline RecordingSet parse_xdf(const std::string& bytes, Log* log = nullptr) {
  using namespace xdf_detail;
  if (bytes.size() < 4 || bytes.compare(0, 4, "XDF:") != 0)
    throw FormatError("missing XDF: magic");

  Reader file{reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size(),
              4, 0};

  RecordingSet set;
  struct Partial {
    StreamInfo info;
    std::vector<double> values;  // sample-major
    std::vector<double> ts;
    std::vector<std::string> text;
    std::vector<ClockOffsetSample> offsets;
  };
  std::vector<Partial> partials;

  auto find_partial = [&](std::uint32_t id) -> Partial& {
    for (auto& p : partials)
      if (p.info.stream_id == id) return p;
    throw FormatError("chunk references undeclared stream id " +
                      std::to_string(id));
  };

  while (file.remaining() > 0) {
    const std::size_t chunk_at = file.abs();
    const std::uint64_t len = file.sized_uint("chunk length");
    if (len < 2)
      throw FormatError("chunk length " + std::to_string(len) +
                        " too small at byte " + std::to_string(chunk_at));
    if (len > file.remaining())
      throw TruncationError("chunk length exceeds file", file.abs());
    Reader chunk = file.sub(static_cast<std::size_t>(len));
    const std::uint16_t tag = chunk.u16();

    switch (tag) {
      case kTagFileHeader: {
        const std::string xml = chunk.bytes(chunk.remaining());
        if (auto pid = xml_text(xml, "participant_id")) set.participant_id = *pid;
        if (auto oc = xml_text(xml, "outcomes")) {
          // compact "trial:flag" pairs, e.g. "0:1,1:0"
          std::size_t i = 0;
          while (i < oc->size()) {
            auto colon = oc->find(':', i);
            auto comma = oc->find(',', i);
            if (comma == std::string::npos) comma = oc->size();
            if (colon == std::string::npos || colon > comma)
              throw SchemaError("malformed outcomes field");
            TrialOutcome t;
            try {
              t.trial_index = std::stoi(oc->substr(i, colon - i));
            } catch (const std::exception&) {
              throw SchemaError("malformed outcomes field");
            }
            t.hit = oc->substr(colon + 1, comma - colon - 1) == "1";
            set.outcomes.push_back(t);
            i = comma + 1;
          }
        }
        break;
      }

      case kTagStreamHeader: {
        Partial p;
        p.info.stream_id = chunk.u32();
        const std::string xml = chunk.bytes(chunk.remaining());
        const auto name = xml_text(xml, "name");
        const auto type = xml_text(xml, "type");
        const auto count = xml_text(xml, "channel_count");
        const auto rate = xml_text(xml, "nominal_srate");
        const auto format = xml_text(xml, "channel_format");
        if (!name || !type || !count || !rate || !format)
          throw SchemaError("stream header missing required field (stream " +
                            std::to_string(p.info.stream_id) + ")");
        p.info.name = *name;
        p.info.kind = kind_from_type(*type, log);
        std::size_t nch = 0;
        try {
          nch = static_cast<std::size_t>(std::stoul(*count));
          p.info.nominal_rate = std::stod(*rate);
        } catch (const std::exception&) {
          throw SchemaError("malformed numeric field in stream header");
        }
        if (p.info.nominal_rate < 0)
          throw SchemaError("negative nominal_srate");
        if (nch == 0 || nch > 100000)
          throw SchemaError("unreasonable channel_count " + *count);
        if (*format == "float32")
          p.info.channel_format = ChannelFormat::Float32;
        else if (*format == "double64")
          p.info.channel_format = ChannelFormat::Double64;
        else if (*format == "string")
          p.info.channel_format = ChannelFormat::String;
        else
          throw SchemaError("unsupported channel_format '" + *format + "'");
        if (p.info.channel_format == ChannelFormat::String && nch != 1)
          throw SchemaError("string streams must have exactly 1 channel");
        p.info.channel_labels = xml_all(xml, "label");
        if (p.info.channel_labels.empty()) {
          for (std::size_t c = 0; c < nch; ++c)
            p.info.channel_labels.push_back("ch" + std::to_string(c + 1));
        } else if (p.info.channel_labels.size() != nch) {
          throw SchemaError("channel label count does not match channel_count");
        }
        for (const auto& q : partials)
          if (q.info.stream_id == p.info.stream_id)
            throw SchemaError("duplicate stream id " +
                              std::to_string(p.info.stream_id));
        partials.push_back(std::move(p));
        break;
      }

      case kTagSamples: {
        const std::uint32_t id = chunk.u32();
        Partial& p = find_partial(id);
        const std::uint64_t count = chunk.sized_uint("sample count");
        const std::size_t nch = p.info.channel_labels.size();
        const bool text = p.info.channel_format == ChannelFormat::String;
        const std::size_t value_bytes =
            p.info.channel_format == ChannelFormat::Float32 ? 4u : 8u;
        // Bound before any allocation: every sample needs at least its
        // flag byte plus the smallest possible payload.
        const std::size_t min_per_sample = text ? 3 : 1 + nch * value_bytes;
        if (count > chunk.remaining() / min_per_sample)
          throw TruncationError("sample count exceeds chunk payload",
                                chunk.abs());
        for (std::uint64_t s = 0; s < count; ++s) {
          const std::uint8_t flag = chunk.u8();
          double ts = std::numeric_limits<double>::quiet_NaN();
          if (flag == 8)
            ts = chunk.f64();
          else if (flag != 0)
            throw FormatError("bad timestamp flag " + std::to_string(flag) +
                              " at byte " + std::to_string(chunk.abs() - 1));
          p.ts.push_back(ts);
          if (text) {
            const std::uint64_t len = chunk.sized_uint("string length");
            if (len > chunk.remaining())
              throw TruncationError("string value exceeds chunk", chunk.abs());
            p.text.push_back(chunk.bytes(static_cast<std::size_t>(len)));
          } else {
            for (std::size_t c = 0; c < nch; ++c)
              p.values.push_back(value_bytes == 4
                                     ? static_cast<double>(chunk.f32())
                                     : chunk.f64());
          }
        }
        break;
      }

      case kTagClockOffset: {
        const std::uint32_t id = chunk.u32();
        Partial& p = find_partial(id);
        ClockOffsetSample o;
        o.collection_time = chunk.f64();
        o.offset = chunk.f64();
        p.offsets.push_back(o);
        break;
      }

      case kTagBoundary:
        break;  // padding/recovery marker, no content we use

      case kTagStreamFooter: {
        const std::uint32_t id = chunk.u32();
        find_partial(id);  // must reference a declared stream
        break;
      }

      default:
        log_warn(log, "skipping unknown chunk tag " + std::to_string(tag) +
                          " at byte " + std::to_string(chunk_at));
        break;
    }
  }

  for (auto& p : partials) {
    TimedStream s;
    s.info = std::move(p.info);
    const auto nch = static_cast<Eigen::Index>(s.info.channel_labels.size());
    const auto n = static_cast<Eigen::Index>(p.ts.size());
    s.timestamps.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) s.timestamps[i] = p.ts[i];
    if (s.info.channel_format == ChannelFormat::String) {
      s.text = std::move(p.text);
      s.samples.resize(0, nch);
    } else {
      s.samples.resize(n, nch);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < nch; ++c)
          s.samples(i, c) = p.values[static_cast<std::size_t>(i * nch + c)];
    }
    s.clock_offsets = std::move(p.offsets);
    set.streams.push_back(std::move(s));
  }
  return set;
}

// ---------------------------------------------------------------------------
// write_xdf
// ---------------------------------------------------------------------------

inline std::string write_xdf(const RecordingSet& set) {
  using namespace xdf_detail;
  if (set.streams.empty())
    throw InvariantError("recording set has no streams");

  Writer w;
  w.bytes("XDF:");

  std::string header = "<?xml version=\"1.0\"?><info><version>1.0</version>";
  if (!set.participant_id.empty())
    header +=
        "<participant_id>" + xml_escape(set.participant_id) + "</participant_id>";
  if (!set.outcomes.empty()) {
    header += "<outcomes>";
    for (std::size_t i = 0; i < set.outcomes.size(); ++i) {
      if (i) header += ',';
      header += std::to_string(set.outcomes[i].trial_index) + ':' +
                (set.outcomes[i].hit ? '1' : '0');
    }
    header += "</outcomes>";
  }
  header += "</info>";
  w.chunk(kTagFileHeader, header);

  for (const auto& s : set.streams) {
    const bool text = s.info.channel_format == ChannelFormat::String;
    const std::size_t nch = s.info.channel_labels.size();
    if (text) {
      if (nch != 1)
        throw InvariantError("string stream must have exactly 1 channel");
      if (s.text.size() != static_cast<std::size_t>(s.timestamps.size()))
        throw InvariantError("stream '" + s.info.name +
                             "': text/timestamp length mismatch");
    } else {
      if (s.samples.rows() != s.timestamps.size())
        throw InvariantError("stream '" + s.info.name +
                             "': sample/timestamp length mismatch");
      if (static_cast<std::size_t>(s.samples.cols()) != nch)
        throw InvariantError("stream '" + s.info.name +
                             "': channel label count mismatch");
    }

    Writer h;
    h.u32(s.info.stream_id);
    std::string xml = "<?xml version=\"1.0\"?><info>";
    xml += "<name>" + xml_escape(s.info.name) + "</name>";
    xml += std::string("<type>") + type_from_kind(s.info.kind) + "</type>";
    xml += "<channel_count>" + std::to_string(nch) + "</channel_count>";
    xml += "<nominal_srate>" + format_rate(s.info.nominal_rate) +
           "</nominal_srate>";
    xml += std::string("<channel_format>") + to_string(s.info.channel_format) +
           "</channel_format>";
    xml += "<desc><channels>";
    for (const auto& lab : s.info.channel_labels)
      xml += "<channel><label>" + xml_escape(lab) + "</label></channel>";
    xml += "</channels></desc></info>";
    h.bytes(xml);
    w.chunk(kTagStreamHeader, h.out);
  }

  for (const auto& s : set.streams) {
    for (const auto& o : s.clock_offsets) {
      Writer c;
      c.u32(s.info.stream_id);
      c.f64(o.collection_time);
      c.f64(o.offset);
      w.chunk(kTagClockOffset, c.out);
    }
  }

  for (const auto& s : set.streams) {
    const Eigen::Index n = s.timestamps.size();
    if (n == 0) continue;  // zero-sample stream: header and footer only
    Writer c;
    c.u32(s.info.stream_id);
    c.sized_uint(static_cast<std::uint64_t>(n));
    const bool f32 = s.info.channel_format == ChannelFormat::Float32;
    const bool text = s.info.channel_format == ChannelFormat::String;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::isnan(s.timestamps[i])) {
        c.u8(0);
      } else {
        c.u8(8);
        c.f64(s.timestamps[i]);
      }
      if (text) {
        c.sized_uint(s.text[static_cast<std::size_t>(i)].size());
        c.bytes(s.text[static_cast<std::size_t>(i)]);
      } else {
        for (Eigen::Index ch = 0; ch < s.samples.cols(); ++ch) {
          if (f32)
            c.f32(static_cast<float>(s.samples(i, ch)));
          else
            c.f64(s.samples(i, ch));
        }
      }
    }
    w.chunk(kTagSamples, c.out);
  }

  for (const auto& s : set.streams) {
    Writer c;
    c.u32(s.info.stream_id);
    std::string xml = "<?xml version=\"1.0\"?><info>";
    xml += "<sample_count>" + std::to_string(s.timestamps.size()) +
           "</sample_count>";
    xml += "</info>";
    c.bytes(xml);
    w.chunk(kTagStreamFooter, c.out);
  }

  return w.out;
}

// ---------------------------------------------------------------------------
// stream_summary
// ---------------------------------------------------------------------------

struct StreamSummaryRow {
  std::uint32_t stream_id = 0;
  std::string name;
  StreamKind kind = StreamKind::Marker;
  double nominal_rate = 0.0;
  std::size_t channels = 0;
  std::size_t samples = 0;
  double duration_s = 0.0;
};

inline std::vector<StreamSummaryRow> stream_summary(const RecordingSet& set) {
  std::vector<StreamSummaryRow> rows;
  for (const auto& s : set.streams) {
    StreamSummaryRow r;
    r.stream_id = s.info.stream_id;
    r.name = s.info.name;
    r.kind = s.info.kind;
    r.nominal_rate = s.info.nominal_rate;
    r.channels = s.info.channel_labels.size();
    r.samples = static_cast<std::size_t>(s.timestamps.size());
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index i = 0; i < s.timestamps.size(); ++i) {
      const double t = s.timestamps[i];
      if (std::isnan(t)) continue;
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    r.duration_s = hi > lo ? hi - lo : 0.0;
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string stream_summary_csv(const std::vector<StreamSummaryRow>& rows) {
  CsvWriter csv({"stream_id", "name", "kind", "nominal_rate_hz", "channels",
                 "samples", "duration_s"});
  for (const auto& r : rows) {
    csv.cell(std::size_t{r.stream_id})
        .cell(r.name)
        .cell(to_string(r.kind))
        .cell(r.nominal_rate)
        .cell(r.channels)
        .cell(r.samples)
        .cell(r.duration_s);
    csv.end_row();
  }
  return csv.str();
}

}  // namespace mobipipe
