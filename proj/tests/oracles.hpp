#pragma once

// Brute-force reference implementations used only by tests. They deliberately take a
// different route from the library code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <tuple>
#include <vector>

#include "dlseg/boxes.hpp"
#include "dlseg/hardmine.hpp"
#include "dlseg/raster.hpp"

namespace dlseg::oracle {

/// Union-find labelling of same-class pixels; returns (class, x, y, w, h, area) sorted.
inline std::vector<std::tuple<int, int, int, int, int, long>> union_find_components(const LabelMask& m,
                                                                                   const std::vector<int>& classes,
                                                                                   bool eight, long min_area) {
  const int H = m.height, W = m.width;
  std::vector<int> parent(static_cast<std::size_t>(H * W));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  auto wanted = [&](int v) { return std::find(classes.begin(), classes.end(), v) != classes.end(); };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int v = m.at(y, x);
      if (!wanted(v)) continue;
      // Look back at already-visited neighbours only.
      const int dxs[] = {-1, 0, -1, 1};
      const int dys[] = {0, -1, -1, -1};
      for (int k = 0; k < (eight ? 4 : 2); ++k) {
        const int nx = x + dxs[k], ny = y + dys[k];
        if (nx < 0 || ny < 0 || nx >= W) continue;
        if (m.at(ny, nx) == v) unite(y * W + x, ny * W + nx);
      }
    }
  struct Acc {
    int cls, x0, y0, x1, y1;
    long area;
  };
  std::map<int, Acc> comps;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int v = m.at(y, x);
      if (!wanted(v)) continue;
      const int r = find(y * W + x);
      auto it = comps.find(r);
      if (it == comps.end()) {
        comps[r] = {v, x, y, x, y, 1};
      } else {
        Acc& a = it->second;
        a.x0 = std::min(a.x0, x);
        a.y0 = std::min(a.y0, y);
        a.x1 = std::max(a.x1, x);
        a.y1 = std::max(a.y1, y);
        ++a.area;
      }
    }
  std::vector<std::tuple<int, int, int, int, int, long>> out;
  for (const auto& [root, a] : comps)
    if (a.area >= min_area) out.emplace_back(a.cls, a.x0, a.y0, a.x1 - a.x0 + 1, a.y1 - a.y0 + 1, a.area);
  std::sort(out.begin(), out.end());
  return out;
}

/// Per-class IoU by enumerating each class and counting set memberships pixel by pixel.
inline std::vector<double> brute_iou(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts, int C) {
  std::vector<double> out(static_cast<std::size_t>(C), std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < C; ++c) {
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
      for (std::size_t k = 0; k < gts[i].data.size(); ++k) {
        if (gts[i].data[k] == kIgnoreLabel) continue;
        const bool in_p = preds[i].data[k] == c;
        const bool in_g = gts[i].data[k] == c;
        inter += in_p && in_g;
        uni += in_p || in_g;
      }
    if (uni > 0) out[static_cast<std::size_t>(c)] = double(inter) / double(uni);
  }
  return out;
}

/// Brute-force confusion counts as a dense row-major table.
inline std::vector<std::uint64_t> brute_confusion(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts,
                                                  int C) {
  std::vector<std::uint64_t> cm(static_cast<std::size_t>(C * C), 0);
  for (int g = 0; g < C; ++g)
    for (int p = 0; p < C; ++p)
      for (std::size_t i = 0; i < preds.size(); ++i)
        for (std::size_t k = 0; k < gts[i].data.size(); ++k)
          if (gts[i].data[k] == g && preds[i].data[k] == p) ++cm[static_cast<std::size_t>(g * C + p)];
  return cm;
}

/// O(n^2) NMS: repeatedly take the best remaining candidate and strike everything overlapping it.
inline std::vector<proposals::Proposal> brute_nms(std::vector<proposals::Proposal> props, double thr, int keep) {
  auto overlap = [](const proposals::BoxF& a, const proposals::BoxF& b) {
    const double x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
    const double x1 = std::min(a.x + a.w, b.x + b.w), y1 = std::min(a.y + a.h, b.y + b.h);
    const double inter = std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0);
    return inter / (a.w * a.h + b.w * b.h - inter);
  };
  auto better = [](const proposals::Proposal& a, const proposals::Proposal& b) {
    return std::tie(b.score, a.box.x, a.box.y, a.box.w, a.box.h) < std::tie(a.score, b.box.x, b.box.y, b.box.w, b.box.h);
  };
  std::vector<bool> alive(props.size(), true);
  std::vector<proposals::Proposal> out;
  while (static_cast<int>(out.size()) < keep) {
    int best = -1;
    for (std::size_t i = 0; i < props.size(); ++i)
      if (alive[i] && (best < 0 || better(props[i], props[static_cast<std::size_t>(best)]))) best = static_cast<int>(i);
    if (best < 0) break;
    alive[static_cast<std::size_t>(best)] = false;
    out.push_back(props[static_cast<std::size_t>(best)]);
    for (std::size_t i = 0; i < props.size(); ++i)
      if (alive[i] && overlap(props[i].box, props[static_cast<std::size_t>(best)].box) > thr) alive[i] = false;
  }
  return out;
}

inline LabelMask random_mask(std::mt19937_64& rng, int h, int w, int classes) {
  LabelMask m(h, w);
  std::uniform_int_distribution<int> d(0, classes - 1);
  for (auto& v : m.data) v = static_cast<std::uint8_t>(d(rng));
  return m;
}

/// Blocky random mask: coarse random grid upsampled, so components have varied sizes.
inline LabelMask random_blocky_mask(std::mt19937_64& rng, int h, int w, int classes, int cell) {
  LabelMask coarse = random_mask(rng, (h + cell - 1) / cell, (w + cell - 1) / cell, classes);
  LabelMask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.at(y, x) = coarse.at(y / cell, x / cell);
  return m;
}

}  // namespace dlseg::oracle
