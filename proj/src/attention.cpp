#include "rfcm/attention.hpp"

#include <cmath>
#include <vector>

#include "rfcm/errors.hpp"

namespace rfcm {

AttentionMask::AttentionMask(std::size_t rows, std::size_t cols, ad::Mask allowed)
    : rows_(rows), cols_(cols) {
  if (allowed.size() != rows * cols) {
    throw DimensionError("attention mask has " + std::to_string(allowed.size()) + " entries for " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    bool any = false;
    for (std::size_t c = 0; c < cols && !any; ++c) any = allowed[r * cols + c] != 0;
    if (!any) throw ContractError("attention mask row " + std::to_string(r) + " allows no column");
  }
  bits_ = std::make_shared<const ad::Mask>(std::move(allowed));
}

AttentionMask AttentionMask::full(std::size_t rows, std::size_t cols) {
  return AttentionMask(rows, cols, ad::Mask(rows * cols, 1));
}

AttentionMask AttentionMask::future_captioning(std::size_t video_rows, std::size_t text_rows,
                                               std::size_t valid_text) {
  if (valid_text == 0 || valid_text > text_rows) {
    throw ContractError("valid text length must be in [1, text rows]");
  }
  const std::size_t n = video_rows + text_rows;
  ad::Mask bits(n * n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < video_rows; ++c) bits[r * n + c] = 1;
    if (r < video_rows) continue;
    const std::size_t j = r - video_rows;
    for (std::size_t c = 0; c <= j && c < valid_text; ++c) bits[r * n + video_rows + c] = 1;
  }
  return AttentionMask(n, n, std::move(bits));
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, Initializer& init, const std::string& name,
                                              std::size_t d_model, std::size_t d_source, std::size_t heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError(name + ": width " + std::to_string(d_model) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.query = Linear::create(store, init, name + ".W_q", d_model, d_model);
  // A key bias shifts every score of a query row equally, so softmax cancels it.
  a.key = Linear::create(store, init, name + ".W_k", d_source, d_model, false);
  a.value = Linear::create(store, init, name + ".W_v", d_source, d_model);
  a.output = Linear::create(store, init, name + ".W_o", d_model, d_model);
  a.heads = heads;
  return a;
}

ad::Var MultiHeadAttention::operator()(const Context& ctx, ad::Var queries, ad::Var source,
                                       const AttentionMask* mask) const {
  const ad::Var q = query(ctx, queries);
  const ad::Var k = key(ctx, source);
  const ad::Var v = value(ctx, source);
  const std::size_t rows = q.value().rows();
  const std::size_t cols = k.value().rows();
  const std::size_t d = q.value().cols();
  const std::size_t d_head = d / heads;
  std::shared_ptr<const ad::Mask> bits;
  if (mask) {
    if (mask->rows() != rows || mask->cols() != cols) {
      throw DimensionError("attention mask " + std::to_string(mask->rows()) + "x" +
                           std::to_string(mask->cols()) + " does not match " + std::to_string(rows) + "x" +
                           std::to_string(cols) + " scores");
    }
    bits = mask->bits();
  } else {
    bits = std::make_shared<const ad::Mask>(rows * cols, 1);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));
  std::vector<ad::Var> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const ad::Var qh = ad::slice_cols(q, h * d_head, d_head);
    const ad::Var kh = ad::slice_cols(k, h * d_head, d_head);
    const ad::Var vh = ad::slice_cols(v, h * d_head, d_head);
    const ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), scale);
    per_head.push_back(ad::matmul(ad::masked_softmax(scores, bits), vh));
  }
  const ad::Var joined = heads == 1 ? per_head[0] : ad::concat(per_head, 1);
  return output(ctx, joined);
}

}  // namespace rfcm
