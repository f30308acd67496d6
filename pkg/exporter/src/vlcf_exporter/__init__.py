from .export import ExportJob, JobError, export_image_features, export_text_features

__version__ = "0.1.0"
__all__ = ["ExportJob", "JobError", "export_image_features", "export_text_features"]
