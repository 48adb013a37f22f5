#include "layoutdiff/layout.hpp"

#include <cctype>
#include <utility>

#include "layoutdiff/serialize.hpp"

namespace layoutdiff {

using nlohmann::json;

TokenList tokenize(std::string_view text) {
  TokenList out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (i < j) {
      std::size_t b = i;
      std::size_t e = j;
      while (b < e && std::ispunct(static_cast<unsigned char>(text[b]))) ++b;
      while (e > b && std::ispunct(static_cast<unsigned char>(text[e - 1]))) --e;
      if (b < e) {
        std::string tok;
        tok.reserve(e - b);
        for (std::size_t p = b; p < e; ++p) {
          tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[p]))));
        }
        out.push_back(std::move(tok));
      }
    }
    i = j;
  }
  return out;
}

TokenSegmentMap map_tokens_to_segments(const TokenList& caption_tokens,
                                       const std::vector<TokenList>& segment_tokens) {
  std::vector<int> k(caption_tokens.size(), 0);
  for (std::size_t n = 0; n < segment_tokens.size(); ++n) {
    const TokenList& seg = segment_tokens[n];
    const std::string id = "segment " + std::to_string(n + 1);
    if (seg.empty()) {
      throw InvalidInput(id + ": token list is empty");
    }
    bool placed = false;
    for (std::size_t start = 0; start + seg.size() <= caption_tokens.size() && !placed;
         ++start) {
      bool ok = true;
      for (std::size_t t = 0; t < seg.size() && ok; ++t) {
        ok = k[start + t] == 0 && caption_tokens[start + t] == seg[t];
      }
      if (ok) {
        for (std::size_t t = 0; t < seg.size(); ++t) {
          k[start + t] = static_cast<int>(n + 1);
        }
        placed = true;
      }
    }
    if (!placed) {
      throw InvalidInput(id + ": no unconsumed contiguous match for \"" +
                         (seg.empty() ? "" : seg.front()) + "...\" in the caption");
    }
  }
  return TokenSegmentMap{std::move(k)};
}

namespace {

void validate_layout(const LayoutCondition& cond) {
  if (cond.width < 1 || cond.height < 1) {
    throw InvalidInput("layout: width and height must be positive");
  }
  if (cond.segments.empty()) {
    throw InvalidInput("layout: at least one segment is required");
  }
  const std::size_t cells = static_cast<std::size_t>(cond.width) * cond.height;
  std::vector<int> owner(cells, 0);
  for (std::size_t n = 0; n < cond.segments.size(); ++n) {
    const auto& seg = cond.segments[n];
    const std::string id = "segment " + std::to_string(n + 1);
    if (seg.mask.size() != cells) {
      throw InvalidInput(id + ": mask has " + std::to_string(seg.mask.size()) +
                         " cells, expected " + std::to_string(cells));
    }
    std::size_t active = 0;
    for (std::size_t c = 0; c < cells; ++c) {
      if (seg.mask[c] != 0 && seg.mask[c] != 1) {
        throw InvalidInput(id + ": mask entry at cell " + std::to_string(c) +
                           " is not 0 or 1");
      }
      if (seg.mask[c] == 1) {
        ++active;
        if (owner[c] != 0) {
          throw InvalidInput("segments " + std::to_string(owner[c]) + " and " +
                             std::to_string(n + 1) + " overlap at cell " + std::to_string(c));
        }
        owner[c] = static_cast<int>(n + 1);
      }
    }
    if (active == 0) {
      throw InvalidInput(id + ": mask has no active cells");
    }
  }

  // Phrase alignment doubles as the substring/non-overlap check.
  const TokenList caption = tokenize(cond.caption);
  std::vector<TokenList> seg_tokens;
  seg_tokens.reserve(cond.segments.size());
  for (std::size_t n = 0; n < cond.segments.size(); ++n) {
    TokenList toks = tokenize(cond.segments[n].text);
    if (toks.empty()) {
      throw InvalidInput("segment " + std::to_string(n + 1) + ": text \"" +
                         cond.segments[n].text + "\" tokenizes to nothing");
    }
    seg_tokens.push_back(std::move(toks));
  }
  map_tokens_to_segments(caption, seg_tokens);
}

}  // namespace

LayoutCondition layout_from_json(const json& j) {
  if (!j.is_object()) {
    throw InvalidInput("layout: document must be a JSON object");
  }
  for (const char* field : {"caption", "width", "height", "segments"}) {
    if (!j.contains(field)) {
      throw InvalidInput(std::string("layout: missing field \"") + field + "\"");
    }
  }
  if (!j["caption"].is_string()) throw InvalidInput("layout: caption must be a string");
  if (!j["width"].is_number_integer() || !j["height"].is_number_integer()) {
    throw InvalidInput("layout: width and height must be integers");
  }
  if (!j["segments"].is_array()) throw InvalidInput("layout: segments must be an array");

  LayoutCondition cond;
  cond.caption = j["caption"].get<std::string>();
  cond.width = j["width"].get<int>();
  cond.height = j["height"].get<int>();
  if (cond.width < 1 || cond.height < 1) {
    throw InvalidInput("layout: width and height must be positive");
  }

  std::size_t index = 0;
  for (const json& s : j["segments"]) {
    const std::string id = "segment " + std::to_string(index + 1);
    if (!s.is_object() || !s.contains("text") || !s.contains("mask")) {
      throw InvalidInput(id + ": expected object with text and mask");
    }
    if (!s["text"].is_string()) throw InvalidInput(id + ": text must be a string");
    if (!s["mask"].is_array() || static_cast<int>(s["mask"].size()) != cond.height) {
      throw InvalidInput(id + ": mask must have " + std::to_string(cond.height) + " rows");
    }
    LayoutCondition::Segment seg;
    seg.text = s["text"].get<std::string>();
    seg.mask.reserve(static_cast<std::size_t>(cond.width) * cond.height);
    for (const json& row : s["mask"]) {
      if (!row.is_array() || static_cast<int>(row.size()) != cond.width) {
        throw InvalidInput(id + ": mask rows must have " + std::to_string(cond.width) +
                           " entries");
      }
      for (const json& v : row) {
        if (!v.is_number_integer()) {
          throw InvalidInput(id + ": mask entries must be integers 0 or 1");
        }
        const auto x = v.get<int>();
        if (x != 0 && x != 1) {
          throw InvalidInput(id + ": mask entries must be 0 or 1");
        }
        seg.mask.push_back(static_cast<std::uint8_t>(x));
      }
    }
    cond.segments.push_back(std::move(seg));
    ++index;
  }

  validate_layout(cond);
  return cond;
}

LayoutCondition parse_layout(const std::string& document) {
  return layout_from_json(parse_json(document, "layout"));
}

json layout_to_json(const LayoutCondition& cond) {
  json segments = json::array();
  for (const auto& seg : cond.segments) {
    json rows = json::array();
    for (int r = 0; r < cond.height; ++r) {
      json row = json::array();
      for (int c = 0; c < cond.width; ++c) {
        row.push_back(static_cast<int>(seg.mask[static_cast<std::size_t>(r) * cond.width + c]));
      }
      rows.push_back(std::move(row));
    }
    segments.push_back(json{{"text", seg.text}, {"mask", std::move(rows)}});
  }
  return json{{"caption", cond.caption},
              {"width", cond.width},
              {"height", cond.height},
              {"segments", std::move(segments)}};
}

ResolvedLayout resolve_layout(const LayoutCondition& cond, int resolution) {
  if (resolution < 2) {
    throw InvalidInput("resolve_layout: resolution must be at least 2");
  }
  if (cond.width % resolution != 0 || cond.height % resolution != 0) {
    throw InvalidInput("resolve_layout: resolution " + std::to_string(resolution) +
                       " does not divide the base grid " + std::to_string(cond.width) + "x" +
                       std::to_string(cond.height));
  }
  const int n_seg = static_cast<int>(cond.segments.size());
  const int h = resolution;
  const int fw = cond.width / h;
  const int fh = cond.height / h;
  const int cells = h * h;

  ResolvedLayout out;
  out.resolution = h;
  out.query_segment.assign(cells, 0);
  out.masks.assign(n_seg, Vec::Zero(cells));
  out.background_mask = Vec::Zero(cells);

  std::vector<int> counts(n_seg);
  for (int cr = 0; cr < h; ++cr) {
    for (int cc = 0; cc < h; ++cc) {
      std::fill(counts.begin(), counts.end(), 0);
      for (int br = cr * fh; br < (cr + 1) * fh; ++br) {
        for (int bc = cc * fw; bc < (cc + 1) * fw; ++bc) {
          const std::size_t base = static_cast<std::size_t>(br) * cond.width + bc;
          for (int n = 0; n < n_seg; ++n) {
            counts[n] += cond.segments[n].mask[base];
          }
        }
      }
      int best = 0;  // background unless some segment covers a base cell
      for (int n = 0; n < n_seg; ++n) {
        if (counts[n] > 0 && (best == 0 || counts[n] > counts[best - 1])) {
          best = n + 1;
        }
      }
      const int cell = cr * h + cc;
      out.query_segment[cell] = best;
      if (best == 0) {
        out.background_mask(cell) = 1.0;
      } else {
        out.masks[best - 1](cell) = 1.0;
      }
    }
  }

  for (int n = 0; n < n_seg; ++n) {
    if (out.masks[n].sum() == 0.0) {
      throw InvalidInput("resolve_layout: segment " + std::to_string(n + 1) +
                         " lost all cells at resolution " + std::to_string(h));
    }
  }
  out.areas = segment_areas(out);
  return out;
}

std::vector<double> segment_areas(const ResolvedLayout& layout) {
  const int cells = layout.resolution * layout.resolution;
  std::vector<double> areas(layout.masks.size() + 1, 0.0);
  for (int id : layout.query_segment) {
    areas[static_cast<std::size_t>(id)] += 1.0;
  }
  for (double& a : areas) {
    a /= cells;
  }
  return areas;
}

}  // namespace layoutdiff
