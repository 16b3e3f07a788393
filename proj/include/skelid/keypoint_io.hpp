#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelid/common.hpp"
#include "skelid/json_write.hpp"
#include "skelid/keypoint_data.hpp"

namespace skelid {

// Maps identity label strings to dense class indices starting at 0.
// Serialized one `label<TAB>index` per line, in index order.
class LabelMap {
  public:
    std::int64_t size() const { return static_cast<std::int64_t>(labels_.size()); }

    const std::string& label(std::int64_t index) const {
        if (index < 0 || index >= size())
            throw ValidationError("label index " + std::to_string(index) + " out of range [0, " +
                                  std::to_string(size()) + ")");
        return labels_[static_cast<std::size_t>(index)];
    }

    std::int64_t index_of(const std::string& label) const {
        auto it = index_.find(label);
        if (it == index_.end()) throw ValidationError("unknown identity label \"" + label + "\"");
        return it->second;
    }

    bool contains(const std::string& label) const { return index_.count(label) != 0; }

    std::int64_t add(const std::string& label) {
        if (label.empty()) throw ValidationError("identity labels must be non-empty");
        if (label.find('\t') != std::string::npos || label.find('\n') != std::string::npos)
            throw ValidationError("identity label may not contain tab or newline: \"" + label + "\"");
        auto it = index_.find(label);
        if (it != index_.end()) return it->second;
        const std::int64_t idx = size();
        labels_.push_back(label);
        index_.emplace(label, idx);
        return idx;
    }

    const std::vector<std::string>& labels() const { return labels_; }

    std::string serialize() const {
        std::string out;
        for (std::int64_t i = 0; i < size(); ++i) {
            out += labels_[static_cast<std::size_t>(i)];
            out += '\t';
            out += std::to_string(i);
            out += '\n';
        }
        return out;
    }

    static LabelMap parse(std::string_view text) {
        std::vector<std::pair<std::int64_t, std::string>> rows;
        std::int64_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const std::size_t eol = std::min(text.find('\n', pos), text.size());
            std::string_view line = text.substr(pos, eol - pos);
            ++line_no;
            pos = eol + 1;
            if (line.empty()) continue;
            const std::size_t tab = line.find('\t');
            if (tab == std::string_view::npos || tab == 0)
                throw ParseError("labels line " + std::to_string(line_no) +
                                 ": expected `label<TAB>index`");
            const std::string label(line.substr(0, tab));
            const std::string idx_text(line.substr(tab + 1));
            std::int64_t idx = 0;
            try {
                std::size_t used = 0;
                idx = std::stoll(idx_text, &used);
                if (used != idx_text.size() || idx < 0) throw std::invalid_argument("bad");
            } catch (const std::exception&) {
                throw ParseError("labels line " + std::to_string(line_no) +
                                 ": index must be a non-negative integer, got \"" + idx_text + "\"");
            }
            rows.emplace_back(idx, label);
        }
        std::sort(rows.begin(), rows.end());
        LabelMap map;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].first != static_cast<std::int64_t>(i))
                throw SchemaError("label indices must be dense from 0; index " +
                                  std::to_string(rows[i].first) +
                                  (i > 0 && rows[i].first == rows[i - 1].first ? " appears twice"
                                                                              : " breaks the run"));
            if (map.contains(rows[i].second))
                throw SchemaError("label \"" + rows[i].second + "\" appears twice");
            map.add(rows[i].second);
        }
        return map;
    }

  private:
    std::vector<std::string> labels_;
    std::map<std::string, std::int64_t> index_;
};

// One clip as stored on disk: id, identity label string, nominal frame rate,
// and the raw keypoint sequence.
struct ClipRecord {
    std::string clip_id;
    std::string identity_label;
    double fps = 30.0;
    KeypointSequence sequence;
};

// Clip file layout, line-oriented JSON (the whole file is one JSON document):
//   line 1:        {"clip_id":…,"identity":…,"fps":…,"frames":[
//   one per frame: {"index":k,"keypoints":[[x,y,c],…]}   (comma-joined)
//   last line:     ]}
inline std::string serialize_clip(const ClipRecord& clip) {
    clip.sequence.validate();
    if (clip.sequence.frames() == 0) throw ValidationError("cannot serialize a clip with no frames");
    std::string out = "{\"clip_id\":" + jsonw::str(clip.clip_id) +
                      ",\"identity\":" + jsonw::str(clip.identity_label) +
                      ",\"fps\":" + jsonw::num(clip.fps) + ",\"frames\":[\n";
    const std::int64_t T = clip.sequence.frames(), V = clip.sequence.vertices();
    for (std::int64_t t = 0; t < T; ++t) {
        out += "{\"index\":" + jsonw::num(t) + ",\"keypoints\":[";
        for (std::int64_t v = 0; v < V; ++v) {
            if (v) out += ',';
            out += '[';
            out += jsonw::num(clip.sequence.at(0, t, v));
            out += ',';
            out += jsonw::num(clip.sequence.at(1, t, v));
            out += ',';
            out += jsonw::num(clip.sequence.at(2, t, v));
            out += ']';
        }
        out += t + 1 < T ? "]},\n" : "]}\n";
    }
    out += "]}\n";
    return out;
}

namespace detail {

inline std::int64_t line_of_byte(std::string_view text, std::size_t byte) {
    std::int64_t line = 1;
    const std::size_t end = std::min(byte, text.size());
    for (std::size_t i = 0; i < end; ++i)
        if (text[i] == '\n') ++line;
    return line;
}

}  // namespace detail

inline ClipRecord parse_clip(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("clip file line " + std::to_string(detail::line_of_byte(text, e.byte)) +
                         ": " + e.what());
    }

    if (!doc.is_object()) throw SchemaError("clip file top level must be an object");
    auto require = [&doc](const char* key) -> const nlohmann::json& {
        auto it = doc.find(key);
        if (it == doc.end()) throw SchemaError(std::string("clip file missing field \"") + key + "\"");
        return *it;
    };
    const nlohmann::json& jclip = require("clip_id");
    const nlohmann::json& jident = require("identity");
    const nlohmann::json& jfps = require("fps");
    const nlohmann::json& jframes = require("frames");
    if (!jclip.is_string()) throw SchemaError("\"clip_id\" must be a string");
    if (!jident.is_string()) throw SchemaError("\"identity\" must be a string");
    if (!jfps.is_number()) throw SchemaError("\"fps\" must be a number");
    if (!jframes.is_array()) throw SchemaError("\"frames\" must be an array");
    if (jframes.empty()) throw SchemaError("\"frames\" must contain at least one frame");

    const auto T = static_cast<std::int64_t>(jframes.size());
    std::int64_t V = -1;
    ClipRecord clip;
    clip.clip_id = jclip.get<std::string>();
    clip.identity_label = jident.get<std::string>();
    clip.fps = jfps.get<double>();

    for (std::int64_t t = 0; t < T; ++t) {
        const nlohmann::json& jf = jframes[static_cast<std::size_t>(t)];
        const std::string where = "frame " + std::to_string(t);
        if (!jf.is_object()) throw SchemaError(where + " must be an object");
        auto idx_it = jf.find("index");
        auto kp_it = jf.find("keypoints");
        if (idx_it == jf.end() || !idx_it->is_number_integer())
            throw SchemaError(where + ": \"index\" must be an integer");
        if (idx_it->get<std::int64_t>() != t)
            throw SchemaError(where + ": \"index\" is " + std::to_string(idx_it->get<std::int64_t>()) +
                              " but frames must be listed in order from 0");
        if (kp_it == jf.end() || !kp_it->is_array())
            throw SchemaError(where + ": \"keypoints\" must be an array");
        if (V < 0) {
            V = static_cast<std::int64_t>(kp_it->size());
            if (V == 0) throw SchemaError(where + ": \"keypoints\" must be non-empty");
            clip.sequence = KeypointSequence(T, V);
        }
        if (static_cast<std::int64_t>(kp_it->size()) != V)
            throw SchemaError(where + ": expected " + std::to_string(V) + " keypoints, got " +
                              std::to_string(kp_it->size()));
        for (std::int64_t v = 0; v < V; ++v) {
            const nlohmann::json& jkp = (*kp_it)[static_cast<std::size_t>(v)];
            if (!jkp.is_array() || jkp.size() != 3)
                throw SchemaError(where + ": keypoint " + std::to_string(v) + " must be [x, y, confidence], got " +
                                  (jkp.is_array() ? std::to_string(jkp.size()) + " values" : "a non-array"));
            for (std::size_t c = 0; c < 3; ++c) {
                const nlohmann::json& jv = jkp[c];
                if (!jv.is_number())
                    throw SchemaError(where + ": keypoint " + std::to_string(v) + " component " +
                                      std::to_string(c) + " must be a number");
                clip.sequence.at(static_cast<std::int64_t>(c), t, v) = jv.get<double>();
            }
        }
    }
    try {
        clip.sequence.validate();
    } catch (const ValidationError& e) {
        throw SchemaError(std::string("clip file: ") + e.what());
    }
    return clip;
}

inline void write_clip_file(const std::string& path, const ClipRecord& clip) {
    atomic_write_file(path, serialize_clip(clip));
}

inline ClipRecord read_clip_file(const std::string& path) { return parse_clip(read_file_bytes(path)); }

// Split manifest layout, one record per line:
//   ratio<TAB>0.8
//   train<TAB>clip_id     (one per training clip)
//   test<TAB>clip_id      (one per test clip)
inline std::string serialize_split(const SplitManifest& split) {
    std::string out = "ratio\t" + format_double(split.train_ratio) + "\n";
    for (const auto& id : split.train) out += "train\t" + id + "\n";
    for (const auto& id : split.test) out += "test\t" + id + "\n";
    return out;
}

inline SplitManifest parse_split(std::string_view text) {
    SplitManifest out;
    bool saw_ratio = false;
    std::map<std::string, int> seen;
    std::int64_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, eol - pos);
        ++line_no;
        pos = eol + 1;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos || tab == 0)
            throw ParseError("split manifest line " + std::to_string(line_no) +
                             ": expected `tag<TAB>value`");
        const std::string tag(line.substr(0, tab));
        const std::string value(line.substr(tab + 1));
        if (value.empty())
            throw ParseError("split manifest line " + std::to_string(line_no) + ": empty value");
        if (tag == "ratio") {
            if (saw_ratio)
                throw SchemaError("split manifest line " + std::to_string(line_no) +
                                  ": duplicate ratio line");
            bool ok = false;
            const double r = parse_double(value, ok);
            if (!ok || !(r > 0.0 && r < 1.0))
                throw SchemaError("split manifest line " + std::to_string(line_no) +
                                  ": ratio must lie strictly between 0 and 1, got \"" + value + "\"");
            out.train_ratio = r;
            saw_ratio = true;
        } else if (tag == "train" || tag == "test") {
            if (!seen.emplace(value, 1).second)
                throw SchemaError("split manifest: clip \"" + value +
                                  "\" is listed twice; the two sides must be disjoint");
            (tag == "train" ? out.train : out.test).push_back(value);
        } else {
            throw ParseError("split manifest line " + std::to_string(line_no) + ": unknown tag \"" +
                             tag + "\" (expected ratio, train, or test)");
        }
    }
    if (!saw_ratio) throw SchemaError("split manifest is missing its ratio line");
    return out;
}

inline void write_split_file(const std::string& path, const SplitManifest& split) {
    atomic_write_file(path, serialize_split(split));
}

inline SplitManifest read_split_file(const std::string& path) {
    return parse_split(read_file_bytes(path));
}

inline LabeledSequence to_labeled(const ClipRecord& clip, const LabelMap& labels) {
    LabeledSequence out;
    out.sequence = clip.sequence;
    out.identity = labels.index_of(clip.identity_label);
    out.clip_id = clip.clip_id;
    return out;
}

inline LabeledSequence load_sequence_file(const std::string& path, const LabelMap& labels) {
    return to_labeled(read_clip_file(path), labels);
}

}  // namespace skelid
