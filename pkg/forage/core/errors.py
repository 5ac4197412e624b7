"""
Excepciones del pipeline de adquisición de alimentos
"""


class ForageError(Exception):
    """Error base: la CLI lo traduce a un código de salida distinto de cero"""
    pass


class IngestError(ForageError):
    """Error fatal al leer un archivo de entrada (esquema o integridad)"""

    def __init__(self, message: str, source: str = None, row: int = None):
        self.source = source
        self.row = row
        prefix = f"{source}: " if source else ""
        suffix = f" (fila {row})" if row is not None else ""
        super().__init__(f"{prefix}{message}{suffix}")


class IndexRadiusError(ForageError):
    """El radio de consulta excede el alcance configurado del índice espacial"""
    pass


class ConfigError(ForageError):
    """Configuración inválida; `key_path` apunta a la clave problemática"""

    def __init__(self, message: str, key_path: str = None):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


class MissingInputError(ForageError):
    """Falta la salida de una etapa previa"""

    def __init__(self, path):
        self.path = path
        super().__init__(f"Falta el archivo requerido: {path}")
