"""
Text serialization of networks for the versioned model file format.

Each network is written as an architecture line followed by its layers; every array is a shape line and its
rows in row-major order, values printed with 17 significant digits so 64-bit floats round-trip exactly.
"""
import numpy as np

from nn.lstm import LstmLayerParams
from nn.network import Activation, DenseParams, NetworkParams
from util.errors import DataError

HEADER = 'PMUGAN v1'


def format_values(values) -> str:
    return ' '.join('%.17g' % v for v in values)


def format_array(name: str, arr: np.ndarray) -> list:
    if arr.ndim == 1:
        return ['{0} {1}'.format(name, arr.shape[0]), format_values(arr)]
    lines = ['{0} {1} {2}'.format(name, *arr.shape)]
    lines.extend(format_values(row) for row in arr)
    return lines


def format_network(role: str, net: NetworkParams) -> list:
    lines = ['network {0} {1} {2} {3}'.format(role, net.output_activation.value, net.input_dim, len(net.layers))]
    for layer in net.layers:
        lines.append('lstm {0} {1}'.format(layer.input_dim, layer.hidden_dim))
        for name, arr in layer.arrays().items():
            lines.extend(format_array(name, arr))
    lines.append('dense {0} {1}'.format(net.head.in_dim, net.head.out_dim))
    for name, arr in net.head.arrays().items():
        lines.extend(format_array(name, arr))
    return lines


class LineReader:
    """
    Sequential reader over the lines of a model file, reporting the line number on errors.
    """

    def __init__(self, lines) -> None:
        self.lines = [line.rstrip('\n') for line in lines]
        self.pos = 0

    def next_line(self) -> str:
        if self.pos >= len(self.lines):
            raise DataError('Unexpected end of model file')
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect(self, keyword: str) -> list:
        """Reads the next line, checks its first word and returns the remaining words"""
        fields = self.next_line().split()
        if not fields or fields[0] != keyword:
            raise DataError('Model file line {0}: expected "{1}", got "{2}"'
                            .format(self.pos, keyword, ' '.join(fields)))
        return fields[1:]

    def floats(self, count: int) -> np.ndarray:
        try:
            values = np.array([float(x) for x in self.next_line().split()])
        except ValueError as e:
            raise DataError('Model file line {0}: {1}'.format(self.pos, e))
        if len(values) != count:
            raise DataError('Model file line {0}: expected {1} values, got {2}'.format(self.pos, count, len(values)))
        return values


def parse_array(reader: LineReader, name: str) -> np.ndarray:
    shape = [int(x) for x in reader.expect(name)]
    if len(shape) == 1:
        return reader.floats(shape[0])
    return np.vstack([reader.floats(shape[1]) for _ in range(shape[0])]).reshape(shape)


def parse_network(reader: LineReader, role: str) -> NetworkParams:
    fields = reader.expect('network')
    if len(fields) != 4 or fields[0] != role:
        raise DataError('Model file: expected the {0} network, got "{1}"'.format(role, ' '.join(fields)))
    try:
        activation = Activation(fields[1])
    except ValueError:
        raise DataError('Model file: unknown activation {0}'.format(fields[1]))
    layers = []
    for _ in range(int(fields[3])):
        reader.expect('lstm')
        layers.append(LstmLayerParams(parse_array(reader, 'w_x'), parse_array(reader, 'w_h'), parse_array(reader, 'b')))
    reader.expect('dense')
    head = DenseParams(parse_array(reader, 'w'), parse_array(reader, 'b'))
    net = NetworkParams(layers, head, activation)
    if net.input_dim != int(fields[2]):
        raise DataError('Model file: {0} input dim mismatch'.format(role))
    if not net.all_finite():
        raise DataError('Model file: {0} contains non-finite weights'.format(role))
    return net
