#ifndef CAMOBREW_CAMOBREW_HPP
#define CAMOBREW_CAMOBREW_HPP

#include "camobrew/ablate.hpp"
#include "camobrew/attack.hpp"
#include "camobrew/augment.hpp"
#include "camobrew/config.hpp"
#include "camobrew/dataset.hpp"
#include "camobrew/error.hpp"
#include "camobrew/io/artifacts.hpp"
#include "camobrew/io/datasets.hpp"
#include "camobrew/io/files.hpp"
#include "camobrew/model.hpp"
#include "camobrew/pipeline.hpp"
#include "camobrew/report.hpp"
#include "camobrew/rng.hpp"
#include "camobrew/train.hpp"

#endif  // CAMOBREW_CAMOBREW_HPP
