/*
 * Copyright 2026 The palsylm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include "palsylm/dataset.hpp"
#include "palsylm/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace palsylm {

/// Synthetic face corpus parameters. The generator stands in for
/// photograph databases that cannot be redistributed.
struct SynthConfig
{
    int n_subjects = 20;
    int images_per_subject = 8;
    /// 0 = symmetric controls; > 0 = unilateral droop of brow, lower lid
    /// and oral commissure, proportional to this value (patients).
    double asymmetry = 0.0;
    std::uint64_t seed = 1;
    int image_size = 160;
    double box_jitter = 0.03;
    double noise_sigma = 6.0;
    std::string id_prefix = "s";
};

/// The eight expression labels cycled through per subject.
const std::vector<std::string>& synthetic_expressions();

/// Neutral frontal template in the unit frame of its 10%-margin landmark box.
Shape68 canonical_unit_shape();

/// One generated sample before rendering.
struct SyntheticFace
{
    Shape68 landmarks; // image pixels
    std::string expression;
    int affected_side = 0; // -1 subject-right, +1 subject-left, 0 none
    double severity = 0.0;
};

/// Landmarks for every image of every subject, in corpus order; no pixels.
std::vector<SyntheticFace> synthesize_faces(const SynthConfig& config);

/// Draws a face-like grayscale image whose structures follow `landmarks`.
GrayImage render_face(const Shape68& landmarks, int size, double noise_sigma, std::uint64_t seed);

/// Renders the corpus into out_dir/images/*.png and writes
/// out_dir/dataset.xml. Returns the index (root = out_dir).
DatasetIndex generate_synthetic_corpus(const SynthConfig& config, const std::filesystem::path& out_dir);

} // namespace palsylm
