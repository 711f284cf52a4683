#pragma once

#include <string>

#include "gravity/core.hpp"

/// JSON import/export for scenes and evaluation sets.
///
/// Scene schema: {"origin": [x,y,z], "lengths": [lx,ly,lz],
///                "cells": [Mx,My,Mz], "density": [...]} with the density
/// array flat row-major over (i,j,k), k fastest.
/// Evaluation-set schema: {"points": [[x,y,z], ...]}.
namespace gravity::io {

DensityScene load_scene(const std::string& path);
void save_scene(const DensityScene& scene, const std::string& path);

EvaluationSet load_evaluation_set(const std::string& path);
void save_evaluation_set(const EvaluationSet& evals, const std::string& path);

}  // namespace gravity::io
