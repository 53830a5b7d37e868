#pragma once

#include <memory>
#include <optional>

#include "rfcm/autodiff.hpp"
#include "rfcm/params.hpp"

namespace rfcm {

/// Boolean attention permission matrix; true = the row may attend the column.
/// Every row must allow at least one column.
class AttentionMask {
 public:
  AttentionMask(std::size_t rows, std::size_t cols, ad::Mask allowed);

  static AttentionMask full(std::size_t rows, std::size_t cols);

  /// Mask over the encoder sequence [video slots; text tokens].  Video rows
  /// see only video columns; text row j sees every video column and text
  /// columns up to j; columns at or after valid_text are padding and are
  /// closed to every row.
  static AttentionMask future_captioning(std::size_t video_rows, std::size_t text_rows,
                                         std::size_t valid_text);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool allowed(std::size_t r, std::size_t c) const { return (*bits_)[r * cols_ + c] != 0; }
  const std::shared_ptr<const ad::Mask>& bits() const noexcept { return bits_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::shared_ptr<const ad::Mask> bits_;
};

/// Scaled dot-product attention with `heads` heads, scale 1/sqrt(d_head),
/// heads concatenated and passed through an output projection.
struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParamStore& store, Initializer& init, const std::string& name,
                                   std::size_t d_model, std::size_t d_source, std::size_t heads);

  /// Queries from `queries` rows, keys and values from `source` rows.  With no
  /// mask every row attends every source row.
  ad::Var operator()(const Context& ctx, ad::Var queries, ad::Var source,
                     const AttentionMask* mask = nullptr) const;
};

}  // namespace rfcm
