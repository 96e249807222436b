#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "pyramem/core_types.hpp"
#include "pyramem/error.hpp"

namespace pyramem {

inline constexpr double kDefaultClipLength = 30.0;

// One line of an ingest stream: {"t": seconds | "MM:SS", "text": "...",
// "media": "uri"?}. The remaining fields are optional extractor hints.
struct TimedEvent {
  double t = 0.0;
  std::string text;
  std::optional<std::string> media;
  std::string scene;
  std::string asr;
  double duration = 0.0;
  std::vector<std::string> names;
  std::vector<Embedding> faces;
  std::optional<std::string> voice;

  friend bool operator==(const TimedEvent&, const TimedEvent&) = default;
};

struct ClipObservation {
  std::uint64_t window = 0;
  TimeSpan span;
  std::vector<TimedEvent> events;
  std::vector<KeyframeRef> media_refs;
};

inline void to_json(Json& j, const TimedEvent& e) {
  j = Json{{"t", e.t}, {"text", e.text}};
  if (e.media) j["media"] = *e.media;
  if (!e.scene.empty()) j["scene"] = e.scene;
  if (!e.asr.empty()) j["asr"] = e.asr;
  if (e.duration > 0.0) j["duration"] = e.duration;
  if (!e.names.empty()) j["names"] = e.names;
  if (!e.faces.empty()) j["faces"] = e.faces;
  if (e.voice) j["voice"] = *e.voice;
}

inline TimedEvent decode_event(const Json& j, const std::string& path) {
  using namespace decode;
  TimedEvent e;
  const auto& t = member(j, "t", path);
  if (t.is_string()) {
    try {
      e.t = parse_timestamp(t.get<std::string>());
    } catch (const InvalidArgumentError& err) {
      fail(join(path, "t"), err.what());
    }
  } else {
    e.t = number_of(t, join(path, "t"));
  }
  if (e.t < 0.0) fail(join(path, "t"), "negative timestamp");
  e.text = str(j, "text", path);
  e.media = optional_str(j, "media", path);
  e.scene = optional_str(j, "scene", path).value_or("");
  e.asr = optional_str(j, "asr", path).value_or("");
  if (j.contains("duration")) e.duration = num(j, "duration", path);
  if (j.contains("names")) e.names = list(j, "names", path, string_of);
  if (j.contains("faces")) e.faces = list(j, "faces", path, decode::embedding);
  e.voice = optional_str(j, "voice", path);
  return e;
}

inline void from_json(const Json& j, TimedEvent& e) { e = decode_event(j, ""); }

// Line-delimited JSON events. Blank lines are skipped.
inline std::vector<TimedEvent> read_event_stream(std::istream& in) {
  std::vector<TimedEvent> events;
  std::string line;
  std::size_t line_no = 0;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_offset + e.byte,
                       "line " + std::to_string(line_no));
    }
    events.push_back(decode_event(j, "line " + std::to_string(line_no)));
  }
  return events;
}

// Incremental fixed-window segmentation. Window k covers [k*len, (k+1)*len);
// a window is emitted only once an event at or beyond its end arrives (or on
// finish), so a consumer never sees events past the emitted clip's end.
class StreamSegmenter {
 public:
  explicit StreamSegmenter(double clip_len = kDefaultClipLength, std::uint64_t first_window = 0)
      : clip_len_(clip_len), next_window_(first_window) {
    if (!(clip_len > 0.0) || !std::isfinite(clip_len))
      throw InvalidArgumentError("clip length must be positive");
  }

  double clip_length() const noexcept { return clip_len_; }
  std::uint64_t next_window() const noexcept { return next_window_; }
  std::uint64_t skipped() const noexcept { return skipped_; }

  std::vector<ClipObservation> push(const TimedEvent& event) {
    if (last_t_ && event.t < *last_t_) {
      throw InvalidArgumentError("events out of order at index " + std::to_string(count_) +
                                 ": t=" + format_number(event.t) + " after t=" +
                                 format_number(*last_t_));
    }
    last_t_ = event.t;
    ++count_;

    const auto window = window_of(event.t);
    std::vector<ClipObservation> done;
    if (window < next_window_) {
      ++skipped_;
      return done;
    }
    if (!current_) open(next_window_);
    while (current_->window < window) {
      done.push_back(close(window_end(current_->window)));
      open(next_window_);
    }
    add(event);
    return done;
  }

  // Emits the pending window, if any, ending at the last seen timestamp.
  std::optional<ClipObservation> finish() {
    if (!current_) return std::nullopt;
    const double end = last_t_ ? std::max(*last_t_, current_->span.start) : current_->span.start;
    return close(std::min(end, window_end(current_->window)));
  }

 private:
  std::uint64_t window_of(double t) const {
    return static_cast<std::uint64_t>(std::floor(t / clip_len_));
  }
  double window_end(std::uint64_t w) const { return static_cast<double>(w + 1) * clip_len_; }

  void open(std::uint64_t w) {
    current_ = ClipObservation{};
    current_->window = w;
    current_->span.start = static_cast<double>(w) * clip_len_;
  }

  void add(const TimedEvent& e) {
    current_->events.push_back(e);
    if (e.media) current_->media_refs.push_back({e.t, *e.media, KeyframeEncoding::external_file});
  }

  ClipObservation close(double end) {
    ClipObservation out = std::move(*current_);
    out.span.end = end;
    current_.reset();
    next_window_ = out.window + 1;
    return out;
  }

  static std::string format_number(double v) {
    Json j = v;
    return j.dump();
  }

  double clip_len_;
  std::uint64_t next_window_;
  std::uint64_t skipped_ = 0;
  std::size_t count_ = 0;
  std::optional<double> last_t_;
  std::optional<ClipObservation> current_;
};

// Whole-stream segmentation. Windows between events are emitted even when
// empty; the final partial window ends at the last event.
inline std::vector<ClipObservation> segment(const std::vector<TimedEvent>& events,
                                            double clip_len = kDefaultClipLength) {
  StreamSegmenter segmenter(clip_len);
  std::vector<ClipObservation> clips;
  for (const auto& e : events) {
    auto done = segmenter.push(e);
    for (auto& c : done) clips.push_back(std::move(c));
  }
  if (auto last = segmenter.finish()) clips.push_back(std::move(*last));
  return clips;
}

}  // namespace pyramem
