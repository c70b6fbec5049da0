from .export import (ExportError, ExportManifest, dump_samples, export_model,
                     parity_check)

__all__ = ["ExportError", "ExportManifest", "dump_samples", "export_model",
           "parity_check"]
