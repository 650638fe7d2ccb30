#pragma once

// Dataset plumbing for the experiment runner: synthetic generators, CSV
// ingestion with first-appearance label interning, feature standardization,
// and train/validation/fragment splitting.

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fire/model.hpp"
#include "fire/numkernel.hpp"

namespace fire {

// Gaussian class blobs; 2-d blobs sit on a circle so angular shifts move
// them against each other. Balanced labels, shuffled order.
Fragment make_blobs(int n, int classes, int dim, double noise, Rng& rng);

// The usual pair of interleaved half-circles, binary labels.
Fragment make_two_moons(int n, double noise, Rng& rng);

struct LabelMap {
    std::vector<std::string> classes;  // id = position, first-appearance order
    int intern(const std::string& name);
    int lookup(const std::string& name) const;  // -1 when absent
};

struct FeatureStats {
    std::vector<double> mean, scale;
    static FeatureStats fit(const Fragment& frag);
    Fragment apply(const Fragment& frag) const;
};

// Raw CSV ingestion: header row, numeric feature cells, labels interned into
// `labels` in first-appearance order. Row order preserved.
Fragment load_csv_examples(const std::string& path, const std::string& label_column,
                           LabelMap& labels);

// Spec'd loader: features standardized with the file's own statistics.
Fragment load_csv_dataset(const std::string& path, const std::string& label_column,
                          bool standardize = true);

// Feature columns f0..f{d-1} plus a label column, 17-significant-digit reals.
void write_fragment_csv(const Fragment& frag, std::ostream& out);

// Shuffled split; the validation part gets round(n * val_fraction) examples
// (at least one, at most n-1).
std::pair<Fragment, Fragment> split_train_val(const Fragment& full,
                                              double val_fraction, Rng& rng);

// Contiguous near-equal fragments in order.
std::vector<Fragment> make_fragments(const Fragment& train, int count,
                                     Provenance provenance);

}  // namespace fire
