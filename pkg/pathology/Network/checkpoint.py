"""msgpack model checkpoints: architecture, training config echo and float64 tensors."""

from pathlib import Path

import msgpack
import numpy as np
from logzero import logger

from pathology.exceptions import NetworkError
from pathology.Ingest.artifacts import atomic_write_bytes
from pathology.Network.nnet import CompactResNet

FORMAT = 'compact-resnet'
VERSION = 1


def save_checkpoint(path, model, config=None):
    document = {
        'format': FORMAT,
        'version': VERSION,
        'architecture': model.architecture(),
        'config': config or {},
        'tensors': [
            {'name': name, 'shape': list(value.shape), 'data': np.ascontiguousarray(value, dtype='<f8').tobytes()}
            for name, value in model.parameters().items()
        ],
    }
    atomic_write_bytes(path, msgpack.packb(document, use_bin_type=True))
    logger.debug(f"saved {model.parameter_count()} parameters to {path}")


def load_checkpoint(path):
    """Returns (model, config)."""
    path = Path(path)
    if not path.is_file():
        raise NetworkError(f"no checkpoint at {path}; run the train stage first")
    try:
        document = msgpack.unpackb(path.read_bytes(), raw=False)
    except (ValueError, TypeError) as exc:
        raise NetworkError(f"corrupt checkpoint {path}: {exc}") from exc
    if not isinstance(document, dict) or document.get('format') != FORMAT:
        raise NetworkError(f"{path} is not a {FORMAT} checkpoint")
    if document.get('version') != VERSION:
        raise NetworkError(f"unsupported checkpoint version {document.get('version')} in {path}")

    arch = document['architecture']
    model = CompactResNet(
        arch['num_classes'], input_shape=tuple(arch['input_shape']), widths=tuple(arch['widths']),
        activation=arch['activation'], seed=arch['seed'],
    )
    tensors = {}
    for tensor in document['tensors']:
        shape = tuple(tensor['shape'])
        data = np.frombuffer(tensor['data'], dtype='<f8')
        if data.size != int(np.prod(shape)):
            raise NetworkError(f"tensor {tensor['name']} holds {data.size} values for shape {shape}")
        tensors[tensor['name']] = data.reshape(shape)
    model.load_parameters(tensors)
    return model, document.get('config', {})
