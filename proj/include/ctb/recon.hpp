#pragma once

#include <string>

#include "ctb/radon.hpp"
#include "ctb/tape.hpp"
#include "ctb/tensor.hpp"

namespace ctb {

/// A reconstruction procedure exposing plain evaluation and a taped variant
/// whose input gradients the attack engine differentiates. Implementations
/// share the numeric kernels between both paths, so the taped forward value
/// equals reconstruct() bitwise.
class ReconMethod {
  public:
    virtual ~ReconMethod() = default;

    virtual const std::string& id() const = 0;
    virtual const RadonOperator& op() const = 0;

    virtual Image reconstruct(const Sinogram& f) const = 0;

    /// Records the reconstruction on `tape` starting from the sinogram node
    /// and returns the image-valued output node.
    virtual ad::NodeId reconstruct_taped(ad::Tape& tape, ad::NodeId f_node) const = 0;
};

}  // namespace ctb
