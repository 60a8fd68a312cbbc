import os
import json
import logging
import boto3
import futureproof
import numpy as np
from io import StringIO

from .errors import (
    PfbmuxError,
    ConfigError,
    MetricError,
    DimensionError,
    TimingError,
    TrainingError,
    SampleIOError,
)
from .numerics import ComplexBuf

s3 = boto3.client("s3")

logger = logging.getLogger("pfbmux")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def setup_global_args(parser):
    """
    Set up command-line arguments shared by every pfbmux command.

    Args:
        parser (argparse.ArgumentParser): ArgumentParser object to add arguments to.

    Returns:
        argparse.ArgumentParser: Updated parser with added arguments.

    Arguments added:
        --config: Path or S3 URI of the experiment configuration (JSON).
        --out: Output path (file or directory, depending on the command).
        --seed: Override for the configuration's top-level seed.
        --threads: Worker threads for parallel sections (env PFBMUX_THREADS).
        --debug: Flag to enable debug logging.
    """
    parser.add_argument(
        "--config",
        type=str,
        required=True,
        help="Path or S3 URI of the experiment configuration file (JSON)",
    )
    parser.add_argument(
        "--out",
        type=str,
        default=os.getenv("PFBMUX_OUTPUT_DIR"),
        help="Output path; overrides output_dir from the config (env PFBMUX_OUTPUT_DIR)",
    )
    parser.add_argument(
        "--seed", type=int, default=None, help="Override the config's random seed"
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=int(os.getenv("PFBMUX_THREADS", "0")),
        help="Number of worker threads (default: env PFBMUX_THREADS or sequential)",
    )
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    return parser


def split_s3_uri(uri):
    """
    Split an S3 URI into bucket and key.

    Args:
        uri (str): URI in the format 's3://bucket-name/path/to/object'.

    Returns:
        tuple: (bucket_name, key)
    """
    bucket_name, key = uri[5:].split("/", 1)
    return bucket_name, key


def read_bytes(path):
    """
    Read raw bytes from either a local file path or an S3 URI.

    Args:
        path (str): Local path or 's3://bucket/key' URI.

    Returns:
        bytes: File contents.

    Raises:
        SampleIOError: If the object cannot be read.
    """
    try:
        if path.startswith("s3://"):
            bucket_name, key = split_s3_uri(path)
            response = s3.get_object(Bucket=bucket_name, Key=key)
            return response["Body"].read()
        with open(path, "rb") as f:
            return f.read()
    except Exception as e:
        logger.error(f"Failed to read file (path={path}): {str(e)}")
        raise SampleIOError(f"Failed to read file (path={path}): {str(e)}") from e


def write_bytes(path, data):
    """
    Write raw bytes to either a local file path or an S3 URI.

    Parent directories of local paths are created as needed.

    Args:
        path (str): Local path or 's3://bucket/key' URI.
        data (bytes): Payload to write.

    Raises:
        SampleIOError: If the object cannot be written.
    """
    try:
        if path.startswith("s3://"):
            bucket_name, key = split_s3_uri(path)
            s3.put_object(Bucket=bucket_name, Key=key, Body=data)
            return
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "wb") as f:
            f.write(data)
    except Exception as e:
        logger.error(f"Failed to write file (path={path}): {str(e)}")
        raise SampleIOError(f"Failed to write file (path={path}): {str(e)}") from e


def read_cf32(path, sample_rate_hz):
    """
    Read a headerless cf32 file (interleaved little-endian float32 I/Q).

    Args:
        path (str): Local path or S3 URI.
        sample_rate_hz (float): Sample rate to attach; cf32 carries no header.

    Returns:
        ComplexBuf: The samples at the given rate.

    Raises:
        SampleIOError: If the file cannot be read or holds an odd number of floats.
    """
    data = read_bytes(path)
    if len(data) % 8 != 0:
        raise SampleIOError(
            f"cf32 file size is not a multiple of 8 bytes (path={path}, size={len(data)})"
        )
    iq = np.frombuffer(data, dtype="<f4")
    samples = iq[0::2].astype(np.float64) + 1j * iq[1::2].astype(np.float64)
    return ComplexBuf(samples, sample_rate_hz)


def encode_cf32(buf):
    """
    Encode a buffer as cf32 bytes.

    Args:
        buf (ComplexBuf): Samples to encode.

    Returns:
        bytes: Interleaved little-endian float32 I/Q.
    """
    iq = np.empty(2 * len(buf), dtype="<f4")
    iq[0::2] = buf.samples.real
    iq[1::2] = buf.samples.imag
    return iq.tobytes()


def write_cf32(path, buf):
    """
    Write a buffer as a headerless cf32 file.

    Args:
        path (str): Local path or S3 URI.
        buf (ComplexBuf): Samples to write.
    """
    write_bytes(path, encode_cf32(buf))


def read_json(path):
    """
    Read a JSON document from a local path or an S3 URI.

    Args:
        path (str): Local path or S3 URI.

    Returns:
        dict or list: Decoded document.

    Raises:
        SampleIOError: If the file cannot be read or is not valid JSON.
    """
    data = read_bytes(path)
    try:
        return json.loads(data.decode("utf-8"))
    except Exception as e:
        logger.error(f"Failed to parse JSON (path={path}): {str(e)}")
        raise SampleIOError(f"Failed to parse JSON (path={path}): {str(e)}") from e


def write_json(path, data):
    """
    Write a JSON document to a local path or an S3 URI.

    Floats are written with repr precision so float64 values reload bit-identically.

    Args:
        path (str): Local path or S3 URI.
        data (dict or list): Python object to save as JSON.
    """
    body = StringIO(json.dumps(data, indent=2))
    write_bytes(path, body.getvalue().encode("utf-8"))


def write_csv(path, df):
    """
    Write a DataFrame as CSV to a local path or an S3 URI.

    Args:
        path (str): Local path or S3 URI.
        df (pandas.DataFrame): Table to write (index omitted).
    """
    body = StringIO()
    df.to_csv(body, index=False)
    write_bytes(path, body.getvalue().encode("utf-8"))


def join_path(root, name):
    """Join an output directory (local or S3 prefix) and a file name."""
    if root.startswith("s3://"):
        return root.rstrip("/") + "/" + name
    return os.path.join(root, name)


def parallel_map(fn, items, workers=0):
    """
    Apply fn to every item, optionally on a thread pool.

    Results are returned in the order of items regardless of completion order,
    so any reduction over them is deterministic.

    Args:
        fn (callable): Function of one argument.
        items (iterable): Inputs.
        workers (int, optional): Number of worker threads; 0 or 1 runs sequentially.

    Returns:
        list: fn(item) for each item, in input order.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    workers = min(workers, len(items))
    logger.debug(f"Running {len(items)} tasks on {workers} worker threads")
    with futureproof.ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(fn, item) for item in items]
        return [future.result() for future in futures]


def exit_code_for(exc):
    """
    Map an exception to the CLI exit-code contract.

    Args:
        exc (Exception): The exception raised by a command.

    Returns:
        int: 2 for configuration/plan errors, 3 for numeric/training errors,
            4 for I/O errors, 1 for anything else.
    """
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (TrainingError, MetricError, DimensionError, TimingError)):
        return EXIT_NUMERIC
    if isinstance(exc, (SampleIOError, OSError)):
        return EXIT_IO
    if isinstance(exc, PfbmuxError):
        return EXIT_NUMERIC
    return 1
