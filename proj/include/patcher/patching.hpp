#pragma once

#include <utility>

#include "patcher/tensor.hpp"

namespace patcher {

// Large/small patch geometry for one Patcher block.
//   large:   side of a large patch in pixels (paper's L)
//   context: extra border pixels borrowed from neighbours per side (P)
//   small:   side of a small patch / token (S)
struct PatchSpec {
    int64_t large = 32;
    int64_t context = 8;
    int64_t small = 2;

    int64_t padded_side() const { return large + 2 * context; }
    int64_t tokens_side() const { return padded_side() / small; }  // M
    int64_t core_side() const { return large / small; }            // K
    int64_t crop_offset() const { return context / small; }

    void validate() const;
};

// Maps stacked patches back to image coordinates; inverse of partition.
struct PatchGrid {
    int64_t rows = 0;    // N_h
    int64_t cols = 0;    // N_w
    int64_t batch0 = 0;  // original batch size
    int64_t src_h = 0;
    int64_t src_w = 0;
    PatchSpec spec;

    int64_t stacked_batch() const { return batch0 * rows * cols; }
};

// Splits x [B0,C,H,W] into overlapping large patches stacked along the batch
// axis, row-major by (b0, grid_y, grid_x). Context outside the image is
// zero-filled. Requires H and W divisible by spec.large.
std::pair<Tensor, PatchGrid> partition(const Tensor& x, const PatchSpec& spec);

// Crops the central core_side() x core_side() area of each patch's feature
// map [B,C',M,M] and tiles the crops back into [B0,C',H/S,W/S].
Tensor reassemble(const Tensor& feats, const PatchGrid& grid);

// Zero-pads bottom/right so spatial dims become multiples; keeps originals
// so the network output can be cropped back at the very end.
struct PadToMultipleResult {
    Tensor padded;
    int64_t orig_h = 0;
    int64_t orig_w = 0;
};
PadToMultipleResult pad_to_multiple(const Tensor& x, int64_t multiple);

}  // namespace patcher
