#pragma once

#include "qvsum/common.hpp"
#include "qvsum/autograd.hpp"
#include "qvsum/nn.hpp"
#include "qvsum/frame.hpp"
#include "qvsum/image_io.hpp"
#include "qvsum/json_util.hpp"
#include "qvsum/labels.hpp"
#include "qvsum/extract.hpp"
#include "qvsum/ingest.hpp"
#include "qvsum/intervene.hpp"
#include "qvsum/qencode.hpp"
#include "qvsum/fusion.hpp"
#include "qvsum/conditional.hpp"
#include "qvsum/summarize_eval.hpp"
#include "qvsum/model.hpp"
#include "qvsum/dataset.hpp"
#include "qvsum/run_config.hpp"
#include "qvsum/synthetic.hpp"
#include "qvsum/cli.hpp"
