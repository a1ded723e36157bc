#pragma once

#include <hobj/tensor.hpp>
#include <hobj/types.hpp>

#include <string>
#include <vector>

namespace hobj {

/// Aligned sample: rgb [3 x H x W], xmod [1 x H x W], both in [0, 1].
struct ModalityPair {
    Tensor rgb;
    Tensor xmod;
    ImageD mask;       // binary foreground (saliency)
    LabelImage labels; // raw mask samples (class ids for semantic tasks)
    std::string id;

    Index height() const { return mask.rows(); }
    Index width() const { return mask.cols(); }
};

struct LoadReport {
    std::vector<ModalityPair> pairs; // sorted by stem
    std::vector<std::string> errors; // one entry per incomplete stem
};

/// Reads <root>/rgb/<stem>.ppm, <root>/x/<stem>.pgm and <root>/mask/<stem>.pgm.
/// Stems lacking a counterpart are listed in errors rather than dropped silently.
/// A missing root is an IoError; missing subdirectories count as empty.
LoadReport load_dataset(const std::string& root);

/// Writes pairs in the load_dataset layout. Masks are stored as 0/255 unless raw_labels,
/// which stores the class ids. xmod_maxval 65535 stores 16-bit depth-style PGMs.
void save_dataset(const std::string& root, const std::vector<ModalityPair>& pairs, int xmod_maxval = 255, bool raw_labels = false);

/// Horizontal mirror of every modality and the mask.
ModalityPair hflip(const ModalityPair& p);

} // namespace hobj
