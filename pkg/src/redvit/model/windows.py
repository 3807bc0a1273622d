import numpy as np


def output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def window_indices(height: int, width: int, channels: int, kernel: int, stride: int, padding: int = 0) -> np.ndarray:
    """
    Flat (row, col, channel) indices of every kernel window of an H x W x C image, in
    row-major window order; each row lists one window flattened as (kh, kw, c).
    Positions in the zero padding are -1.
    """
    out_h = output_size(height, kernel, stride, padding)
    out_w = output_size(width, kernel, stride, padding)
    k = np.arange(kernel)
    rows = (np.arange(out_h) * stride - padding)[:, None, None, None, None] + k[None, None, :, None, None]
    cols = (np.arange(out_w) * stride - padding)[None, :, None, None, None] + k[None, None, None, :, None]
    chans = np.arange(channels)[None, None, None, None, :]
    valid = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
    flat = (rows * width + cols) * channels + chans
    flat = np.where(valid, flat, -1)
    return flat.reshape(out_h * out_w, kernel * kernel * channels)
