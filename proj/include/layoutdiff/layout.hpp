#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "layoutdiff/kernel.hpp"

namespace layoutdiff {

/// A caption plus N phrase/mask segments on a width x height base grid.
/// Masks are binary, pairwise disjoint, and each covers at least one cell.
/// Each segment phrase must appear as a contiguous token span of the caption,
/// and spans of distinct segments must not overlap.
struct LayoutCondition {
  struct Segment {
    std::string text;
    std::vector<std::uint8_t> mask;  // row-major width*height, entries 0/1

    bool operator==(const Segment&) const = default;
  };

  std::string caption;
  int width = 0;
  int height = 0;
  std::vector<Segment> segments;

  bool operator==(const LayoutCondition&) const = default;
};

using TokenList = std::vector<std::string>;

/// Maps each caption token index to a 1-based segment id; 0 = unassigned.
struct TokenSegmentMap {
  std::vector<int> k;

  bool operator==(const TokenSegmentMap&) const = default;
};

/// Segment masks resolved to one attention resolution h (an h x h grid,
/// flattened row-major to h^2 query positions). Ownership is a partition:
/// every cell belongs to exactly one segment or to the background (id 0).
struct ResolvedLayout {
  int resolution = 0;
  std::vector<Vec> masks;        // per segment, length h^2, entries 0/1
  Vec background_mask;           // length h^2, complement of the union
  std::vector<int> query_segment;  // length h^2, owner id per cell (0 = background)
  std::vector<double> areas;     // size N+1, index 0 = background, owned cells / h^2

  int num_segments() const { return static_cast<int>(masks.size()); }
};

/// Lowercases, splits on whitespace runs, strips leading/trailing punctuation
/// from each token and drops tokens that end up empty.
TokenList tokenize(std::string_view text);

/// Matches every segment token list against the first unconsumed contiguous
/// occurrence in the caption, scanning segments in input order. Matched spans
/// carry the 1-based segment id; everything else stays 0. Throws InvalidInput
/// (naming the segment) when a list is empty or has no remaining match.
TokenSegmentMap map_tokens_to_segments(const TokenList& caption_tokens,
                                       const std::vector<TokenList>& segment_tokens);

/// Parses and validates the layout condition document:
///   {"caption": str, "width": int, "height": int,
///    "segments": [{"text": str, "mask": [[0|1,...],...]}]}
/// Mask rows run top to bottom, entries left to right. Validation failures
/// (overlaps, empty masks, unalignable phrases, malformed JSON) throw
/// InvalidInput naming the offending segment.
LayoutCondition parse_layout(const std::string& document);

LayoutCondition layout_from_json(const nlohmann::json& j);
nlohmann::json layout_to_json(const LayoutCondition& cond);

/// Pools the base masks down to an h x h grid. A coarse cell is claimed by
/// every segment covering at least one of its base cells; multiple claims go
/// to the segment with the largest covered fraction, ties to the lowest
/// segment index; unclaimed cells become background. Throws InvalidInput if
/// h does not divide the base grid or a segment ends up with no cells.
ResolvedLayout resolve_layout(const LayoutCondition& cond, int resolution);

/// Area fraction per id (background id 0 included): owned cells / h^2.
std::vector<double> segment_areas(const ResolvedLayout& layout);

}  // namespace layoutdiff
