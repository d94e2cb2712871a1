from .dataset import Dataset, empty_like, generate_synthetic
from .partition import PartitionSpec, partition_dirichlet, partition_summary
from .io import load_dataset, save_dataset
